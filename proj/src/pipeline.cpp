#include "bf/pipeline.hpp"

#include <chrono>

#include <fmt/format.h>

#include "bf/error.hpp"

namespace bf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t poisoned_votes(const DetectionRecord& r) {
  std::size_t n = 0;
  for (const auto& v : r.votes) n += v.poisoned() ? 1 : 0;
  return n;
}

} // namespace

std::string_view to_string(PipelineMode m) {
  return m == PipelineMode::train_time ? "train_time" : "inference_time";
}

std::string_view to_string(SampleStatus s) {
  switch (s) {
  case SampleStatus::passed: return "passed";
  case SampleStatus::recovered: return "recovered";
  case SampleStatus::failed: return "failed";
  }
  return "?";
}

void PipelineConfig::validate() const {
  ensemble.validate();
  recovery.validate();
  if (threads == 0) throw ValidationError("thread count must be at least 1");
}

double SanitizationReport::success_rate() const {
  return counts.flagged == 0 ? 1.0 : static_cast<double>(counts.recovered) / counts.flagged;
}

Dataset believed_clean_subset(const Dataset& data, std::span<const DetectionRecord> detections) {
  if (detections.size() != data.size()) throw ValidationError("one detection record per sample is required");
  std::vector<LabeledSample> kept;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!detections[i].aggregate.poisoned()) kept.push_back(data[i]);
  }
  if (kept.empty()) throw RuntimeError("every sample was flagged; nothing left to train a defender on");
  return Dataset(data.name() + "-believed-clean", data.num_classes(), std::move(kept));
}

SanitizeOutput sanitize_with_detections(const Dataset& untrusted, std::vector<DetectionRecord> detections,
                                        const Model& model, const PipelineConfig& cfg) {
  cfg.validate();
  if (detections.size() != untrusted.size()) throw ValidationError("one detection record per sample is required");
  require_same_shape(model.input_shape(), untrusted.shape(), "sanitize input");
  const auto start = Clock::now();

  std::vector<std::size_t> flagged_idx;
  std::vector<LabeledSample> flagged;
  for (std::size_t i = 0; i < untrusted.size(); ++i) {
    if (detections[i].aggregate.poisoned()) {
      flagged_idx.push_back(i);
      flagged.push_back(untrusted[i]);
    }
  }

  SanitizeOutput out{untrusted, {}, std::move(detections), {}};
  SanitizationReport& rep = out.report;
  rep.budget_mode = cfg.recovery.mode_label();

  std::vector<RecoveryResult> results;
  if (cfg.persisted_budget && !flagged.empty()) {
    BudgetResult b = *cfg.persisted_budget;
    b.per_image_epsilons.clear();
    results = recover_with_budget(model, flagged, b, cfg.recovery, cfg.threads);
    rep.budget = std::move(b);
  } else if (cfg.mode == PipelineMode::inference_time) {
    throw ValidationError("inference-time sanitization needs a persisted budget");
  } else {
    auto set = recover_set(model, flagged, cfg.recovery, cfg.threads);
    rep.budget = std::move(set.budget);
    results = std::move(set.results);
  }
  rep.timings.recovery_seconds = seconds_since(start);

  std::vector<LabeledSample> samples = untrusted.samples();
  rep.samples.resize(untrusted.size());
  for (std::size_t i = 0; i < untrusted.size(); ++i) {
    auto& s = rep.samples[i];
    s.index = i;
    s.label = untrusted[i].label;
    s.truth = out.detections[i].truth;
    s.poisoned_votes = poisoned_votes(out.detections[i]);
  }
  for (std::size_t k = 0; k < flagged_idx.size(); ++k) {
    const std::size_t i = flagged_idx[k];
    const RecoveryResult& r = results[k];
    auto& s = rep.samples[i];
    s.flagged = true;
    s.epsilon = r.epsilon;
    s.rho_inf = r.rho_inf;
    s.rho_2 = r.rho_2;
    s.iterations = r.iterations_run;
    s.initial_prediction = r.initial_prediction;
    s.final_prediction = r.final_prediction;
    s.error = r.error;
    if (r.success && !r.error) {
      s.status = SampleStatus::recovered;
      samples[i].image = r.recovered;
      samples[i].provenance = Provenance::recovered;
    } else {
      s.status = SampleStatus::failed;
    }
    out.recoveries.emplace_back(i, r);
  }
  for (const auto& s : rep.samples) {
    switch (s.status) {
    case SampleStatus::passed: ++rep.counts.passed; break;
    case SampleStatus::recovered: ++rep.counts.recovered; break;
    case SampleStatus::failed: ++rep.counts.failed; break;
    }
  }
  rep.counts.flagged = flagged_idx.size();
  out.clean = Dataset(untrusted.name(), untrusted.num_classes(), std::move(samples));
  rep.timings.total_seconds = rep.timings.recovery_seconds;
  return out;
}

SanitizeOutput sanitize(const Dataset& untrusted, const Model& model, const PipelineConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  auto detections = detect_all(untrusted, cfg.ensemble, cfg.threads);
  const double detect_s = seconds_since(start);
  SanitizeOutput out = sanitize_with_detections(untrusted, std::move(detections), model, cfg);
  out.report.timings.detection_seconds = detect_s;
  out.report.timings.total_seconds = seconds_since(start);
  return out;
}

DefendedRun sanitize_untrusted(const Dataset& untrusted, const PipelineConfig& cfg, const TrainConfig& train_cfg) {
  cfg.validate();
  const auto start = Clock::now();
  auto detections = detect_all(untrusted, cfg.ensemble, cfg.threads);
  const double detect_s = seconds_since(start);
  Model defender = train(believed_clean_subset(untrusted, detections), train_cfg).model;
  SanitizeOutput out = sanitize_with_detections(untrusted, std::move(detections), defender, cfg);
  out.report.timings.detection_seconds = detect_s;
  out.report.timings.total_seconds = seconds_since(start);
  return {std::move(defender), std::move(out)};
}

GuardResult guard_inference(const Image& query, const Model& model, const PipelineConfig& cfg,
                            std::optional<Provenance> truth) {
  cfg.validate();
  if (!cfg.persisted_budget)
    throw ValidationError("inference guard needs the budget persisted by a training-time run");
  require_same_shape(model.input_shape(), query.shape(), "query");

  GuardResult g;
  g.detection = detect_one(query, truth, 0, cfg.ensemble);
  g.raw_prediction = model.predict(query);
  if (!g.detection.aggregate.poisoned()) {
    g.image = query;
    g.prediction = g.raw_prediction;
    return g;
  }
  const double eps = cfg.persisted_budget->epsilon;
  RecoveryResult r = corrective_pgd(model, query, g.raw_prediction, eps, eps / cfg.recovery.steps, cfg.recovery);
  g.image = r.recovered;
  g.prediction = r.final_prediction;
  g.recovery = std::move(r);
  return g;
}

} // namespace bf
