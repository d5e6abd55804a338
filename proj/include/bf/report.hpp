#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bf/metrics.hpp"
#include "bf/pipeline.hpp"
#include "bf/recovery.hpp"

namespace bf {

using Json = nlohmann::json;

// {delta_max (null when undefined), epsilon, alpha, mode, per_image_deltas}
Json budget_json(const BudgetResult& b);
BudgetResult budget_from_json(const Json& j);

// {budget: {...}, per_image: [{index, rho_inf, rho_2, iterations, success, ...}]}
Json recovery_report_json(const std::optional<BudgetResult>& budget, std::span<const RecoveryResult> results,
                          std::span<const std::size_t> indices);

Json sanitization_report_json(const SanitizationReport& report);

Json confusion_json(const ConfusionCounts& c);
Json metrics_json(const MetricSet& m);
Json noise_stats_json(const NoiseStats& s);

// One evaluation row: dataset, detector, counts, metrics and breakdown.
struct EvaluationRow {
  std::string dataset;
  std::string detector;
  ConfusionCounts counts;
};

Json evaluation_json(std::span<const EvaluationRow> rows);
// Header plus one line per row; percentages use format_percent.
std::string evaluation_csv(std::span<const EvaluationRow> rows);
// Human-readable table of accuracy/precision/recall/F1 (clean = positive).
std::string evaluation_table(std::span<const EvaluationRow> rows);

// Average-noise row: l-inf with 4 decimals, l2 with 3 decimals and trailing
// zeros dropped ("PubFig", 0.22334, 14.351 -> "0.2233", "14.351").
struct NoiseRow {
  std::string dataset;
  std::string rho_inf;
  std::string rho_2;
};
NoiseRow format_noise_row(std::string_view dataset, double mean_rho_inf, double mean_rho_2);
std::string render_noise_row(const NoiseRow& row);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

} // namespace bf
