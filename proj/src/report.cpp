#include "bf/report.hpp"

#include <fstream>

#include <fmt/format.h>

#include "bf/error.hpp"

namespace bf {

Json budget_json(const BudgetResult& b) {
  Json j;
  j["delta_max"] = b.delta_max ? Json(*b.delta_max) : Json(nullptr);
  j["epsilon"] = b.epsilon;
  j["alpha"] = b.alpha;
  j["mode"] = b.mode;
  j["per_image_deltas"] = b.per_image_deltas;
  if (!b.per_image_epsilons.empty()) j["per_image_epsilons"] = b.per_image_epsilons;
  return j;
}

BudgetResult budget_from_json(const Json& j) {
  try {
    BudgetResult b;
    if (!j.at("delta_max").is_null()) b.delta_max = j.at("delta_max").get<double>();
    b.epsilon = j.at("epsilon").get<double>();
    b.alpha = j.at("alpha").get<double>();
    b.mode = j.value("mode", std::string("global_max"));
    b.per_image_deltas = j.value("per_image_deltas", std::vector<double>{});
    b.per_image_epsilons = j.value("per_image_epsilons", std::vector<double>{});
    if (!(b.epsilon >= 0.0) || !(b.alpha >= 0.0)) throw ValidationError("budget must be non-negative");
    return b;
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("malformed budget: {}", e.what()));
  }
}

namespace {

Json recovery_entry(std::size_t index, const RecoveryResult& r) {
  Json e;
  e["index"] = index;
  e["epsilon"] = r.epsilon;
  e["rho_inf"] = r.rho_inf;
  e["rho_2"] = r.rho_2;
  e["iterations"] = r.iterations_run;
  e["initial_prediction"] = r.initial_prediction;
  e["final_prediction"] = r.final_prediction;
  e["success"] = r.success;
  if (r.error) e["error"] = *r.error;
  return e;
}

Json ratio_json(const Ratio& r) {
  return r.defined ? Json(r.value) : Json(nullptr);
}

} // namespace

Json recovery_report_json(const std::optional<BudgetResult>& budget, std::span<const RecoveryResult> results,
                          std::span<const std::size_t> indices) {
  if (indices.size() != results.size()) throw ValidationError("one index per recovery result is required");
  Json j;
  j["budget"] = budget ? budget_json(*budget) : Json(nullptr);
  j["per_image"] = Json::array();
  for (std::size_t k = 0; k < results.size(); ++k) j["per_image"].push_back(recovery_entry(indices[k], results[k]));
  return j;
}

Json sanitization_report_json(const SanitizationReport& rep) {
  Json j;
  j["counts"] = {{"flagged", rep.counts.flagged},
                 {"recovered", rep.counts.recovered},
                 {"passed", rep.counts.passed},
                 {"failed", rep.counts.failed}};
  j["success_rate"] = rep.success_rate();
  j["budget_mode"] = rep.budget_mode;
  j["budget"] = rep.budget ? budget_json(*rep.budget) : Json(nullptr);
  j["samples"] = Json::array();
  for (const auto& s : rep.samples) {
    Json e;
    e["index"] = s.index;
    e["label"] = s.label;
    e["truth"] = s.truth ? Json(std::string(to_string(*s.truth))) : Json(nullptr);
    e["flagged"] = s.flagged;
    e["status"] = std::string(to_string(s.status));
    e["poisoned_votes"] = s.poisoned_votes;
    if (s.flagged) {
      e["epsilon"] = s.epsilon;
      e["rho_inf"] = s.rho_inf;
      e["rho_2"] = s.rho_2;
      e["iterations"] = s.iterations;
      e["initial_prediction"] = s.initial_prediction;
      e["final_prediction"] = s.final_prediction;
    }
    if (s.error) e["error"] = *s.error;
    j["samples"].push_back(std::move(e));
  }
  j["timings"] = {{"detection_seconds", rep.timings.detection_seconds},
                  {"recovery_seconds", rep.timings.recovery_seconds},
                  {"total_seconds", rep.timings.total_seconds}};
  return j;
}

Json confusion_json(const ConfusionCounts& c) {
  return {{"positive_class", "clean"}, {"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

Json metrics_json(const MetricSet& m) {
  return {{"accuracy", ratio_json(m.accuracy)},
          {"precision", ratio_json(m.precision)},
          {"recall", ratio_json(m.recall)},
          {"f1", ratio_json(m.f1)}};
}

Json noise_stats_json(const NoiseStats& s) {
  auto hist = [](const Histogram& h) { return Json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}; };
  return {{"count", s.count},
          {"mean_rho_inf", s.mean_rho_inf},
          {"mean_rho_2", s.mean_rho_2},
          {"rho_inf_histogram", hist(s.rho_inf_hist)},
          {"rho_2_histogram", hist(s.rho_2_hist)}};
}

Json evaluation_json(std::span<const EvaluationRow> rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    const auto b = outcome_breakdown(r.counts);
    out.push_back({{"dataset", r.dataset},
                   {"detector", r.detector},
                   {"confusion", confusion_json(r.counts)},
                   {"metrics", metrics_json(metrics(r.counts))},
                   {"breakdown",
                    {{"tp", ratio_json(b.tp)}, {"tn", ratio_json(b.tn)}, {"fp", ratio_json(b.fp)}, {"fn", ratio_json(b.fn)}}}});
  }
  return out;
}

std::string evaluation_csv(std::span<const EvaluationRow> rows) {
  std::string out = "dataset,detector,tp,tn,fp,fn,accuracy,precision,recall,f1,tp_pct,tn_pct,fp_pct,fn_pct\n";
  for (const auto& r : rows) {
    const auto m = metrics(r.counts);
    const auto b = outcome_breakdown(r.counts);
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.dataset, r.detector, r.counts.tp, r.counts.tn,
                       r.counts.fp, r.counts.fn, format_percent(m.accuracy.value), format_percent(m.precision.value),
                       format_percent(m.recall.value), format_percent(m.f1.value), format_percent(b.tp.value),
                       format_percent(b.tn.value), format_percent(b.fp.value), format_percent(b.fn.value));
  }
  return out;
}

std::string evaluation_table(std::span<const EvaluationRow> rows) {
  std::string out = fmt::format("{:<10} {:<14} {:>9} {:>9} {:>9} {:>9}   (%, clean = positive)\n", "dataset",
                                "detector", "accuracy", "precision", "recall", "f1");
  for (const auto& r : rows) {
    const auto m = metrics(r.counts);
    out += fmt::format("{:<10} {:<14} {:>9} {:>9} {:>9} {:>9}\n", r.dataset, r.detector,
                       format_percent(m.accuracy.value), format_percent(m.precision.value),
                       format_percent(m.recall.value), format_percent(m.f1.value));
  }
  return out;
}

NoiseRow format_noise_row(std::string_view dataset, double mean_rho_inf, double mean_rho_2) {
  std::string two = fmt::format("{:.3f}", mean_rho_2);
  while (two.back() == '0') two.pop_back();
  if (two.back() == '.') two.pop_back();
  return {std::string(dataset), fmt::format("{:.4f}", mean_rho_inf), two};
}

std::string render_noise_row(const NoiseRow& row) {
  return fmt::format("{} | {} | {}", row.dataset, row.rho_inf, row.rho_2);
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw RuntimeError(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
  if (!out) throw RuntimeError(fmt::format("write failed for {}", path.string()));
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
}

} // namespace bf
