#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bf/classifier.hpp"
#include "bf/dataset.hpp"
#include "bf/image.hpp"

namespace bf {

enum class BudgetMode { global_max, percentile, per_image_capped };

std::string_view to_string(BudgetMode m);
BudgetMode budget_mode_from_string(std::string_view s);

struct RecoveryConfig {
  std::uint32_t steps = 200;
  double safety_margin = 0.05;
  BudgetMode budget_mode = BudgetMode::global_max;
  double percentile = 95.0; // used by BudgetMode::percentile
  bool early_stop = false;

  void validate() const;
  // "global_max", "percentile(95)" or "per_image_capped".
  std::string mode_label() const;
};

struct BudgetResult {
  // Unset when nothing was probed.
  std::optional<double> delta_max;
  double epsilon = 0.0;
  double alpha = 0.0;
  std::vector<double> per_image_deltas;
  // Filled only in per_image_capped mode, one per probed image.
  std::vector<double> per_image_epsilons;
  std::string mode = "global_max";

  double epsilon_for(std::size_t i) const;
};

// Nearest-rank percentile: the ceil(p/100 * N)-th smallest value.
double nearest_rank_percentile(std::span<const double> values, double p);

// eps = (1 + margin) * delta_max, alpha = eps / steps.
BudgetResult compute_budget(double delta_max, double safety_margin, std::uint32_t steps);

// Runs `steps` signed-gradient steps of size 1/steps inside the unit ball
// around each image and records how far it moved in l-inf. Fills
// delta_max and per_image_deltas only. Throws on an empty list or a
// non-finite gradient.
BudgetResult probe_trigger_magnitude(const Model& model, std::span<const LabeledSample> flagged,
                                     std::uint32_t steps, std::size_t threads = 1);

// Turns probe output into the working budget for cfg.budget_mode.
BudgetResult resolve_budget(const BudgetResult& probe, const RecoveryConfig& cfg);

struct RecoveryResult {
  Image recovered;
  double epsilon = 0.0;
  double rho_inf = 0.0;
  double rho_2 = 0.0;
  std::uint32_t iterations_run = 0;
  std::uint32_t initial_prediction = 0;
  std::uint32_t final_prediction = 0;
  bool success = false;
  // Set when the run aborted; `recovered` then holds the input unchanged.
  std::optional<std::string> error;
};

// Called after every projected step with (step, iterate).
using IterateObserver = std::function<void(std::uint32_t, std::span<const float>)>;

// Signed-gradient descent on the loss of y_p, each step clipped to the
// eps-ball around x_p and then to [0,1]. Runs all cfg.steps unless
// cfg.early_stop, in which case it returns as soon as the prediction is y_p.
// Throws RuntimeError naming the step when the gradient goes non-finite.
RecoveryResult corrective_pgd(const Model& model, const Image& x_p, std::uint32_t y_p, double epsilon,
                              double alpha, const RecoveryConfig& cfg, const IterateObserver& observer = {});
RecoveryResult corrective_pgd(const Model& model, const Image& x_p, std::uint32_t y_p, const BudgetResult& budget,
                              const RecoveryConfig& cfg, const IterateObserver& observer = {});

struct RecoverySet {
  std::optional<BudgetResult> budget;
  std::vector<RecoveryResult> results;
};

// Probe, budget, then per-image correction. An empty list yields no budget
// and no results. Per-image failures are recorded, not thrown.
RecoverySet recover_set(const Model& model, std::span<const LabeledSample> flagged, const RecoveryConfig& cfg,
                        std::size_t threads = 1);

// Correction only, with a budget fixed beforehand (e.g. persisted).
std::vector<RecoveryResult> recover_with_budget(const Model& model, std::span<const LabeledSample> flagged,
                                                const BudgetResult& budget, const RecoveryConfig& cfg,
                                                std::size_t threads = 1);

} // namespace bf
