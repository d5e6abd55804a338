#include <random>

#include <gtest/gtest.h>

#include "bf/error.hpp"
#include "bf/metrics.hpp"
#include "bf/pipeline.hpp"
#include "support/benchmark.hpp"
#include "support/constructions.hpp"

using namespace bf;
using namespace bf::oracle;

namespace {

class AlwaysPoisoned final : public Detector {
public:
  std::string name() const override { return "always"; }
  Verdict evaluate(const DetectorInput&) const override { return Verdict::poison("forced"); }
};

const PatchBenchmark& benchmark() {
  static const PatchBenchmark b = make_patch_benchmark(21);
  return b;
}

} // namespace

TEST(Sanitize, CleanInputPassesThroughUnchanged) {
  const auto& b = benchmark();
  const Model m = train(b.clean, benchmark_train_config(1)).model;
  const SanitizeOutput out = sanitize(b.clean, m, oracle_pipeline());
  EXPECT_EQ(out.clean, b.clean);
  EXPECT_EQ(out.report.counts.flagged, 0u);
  EXPECT_EQ(out.report.counts.passed, b.clean.size());
  EXPECT_FALSE(out.report.budget.has_value());
  EXPECT_DOUBLE_EQ(out.report.success_rate(), 1.0);
}

TEST(Sanitize, RecoversEveryPoisonedSample) {
  const auto& b = benchmark();
  const DefendedRun run = sanitize_untrusted(b.poisoned, oracle_pipeline(), benchmark_train_config(2));
  const auto& rep = run.output.report;
  EXPECT_EQ(rep.counts.flagged, b.plan.entries.size());
  EXPECT_EQ(rep.counts.recovered, rep.counts.flagged);
  EXPECT_EQ(rep.counts.failed, 0u);
  ASSERT_EQ(run.output.clean.size(), b.poisoned.size());
  for (std::size_t i = 0; i < b.poisoned.size(); ++i) {
    const auto& s = run.output.clean[i];
    EXPECT_EQ(s.label, b.poisoned[i].label);
    if (b.poisoned[i].provenance == Provenance::poisoned) {
      EXPECT_EQ(s.provenance, Provenance::recovered);
      EXPECT_LE(linf_distance(s.image, b.poisoned[i].image), rep.budget->epsilon + 1e-6);
    } else {
      EXPECT_EQ(s, b.poisoned[i]);
    }
  }
  const auto& first = rep.samples[b.plan.entries.front().index];
  EXPECT_TRUE(first.flagged);
  EXPECT_EQ(first.status, SampleStatus::recovered);
}

TEST(Sanitize, RetrainingOnSanitizedDataRemovesBackdoor) {
  const auto& b = benchmark();
  const Model bad = train(b.poisoned, benchmark_train_config(3)).model;
  EXPECT_GE(attack_success_rate(bad, b.probes, 1), 0.9);
  const DefendedRun run = sanitize_untrusted(b.poisoned, oracle_pipeline(), benchmark_train_config(3));
  const Model fixed = train(run.output.clean, benchmark_train_config(3)).model;
  EXPECT_LE(attack_success_rate(fixed, b.probes, 1), 0.1);
  EXPECT_GE(accuracy(fixed, b.held_out), 0.95);
}

TEST(Sanitize, FalsePositiveKeepsItsPrediction) {
  const auto& b = benchmark();
  const Model m = train(b.clean, benchmark_train_config(4)).model;
  std::vector<LabeledSample> few(b.clean.samples().begin(), b.clean.samples().begin() + 12);
  const Dataset d("fp", 3, few);
  PipelineConfig cfg;
  cfg.ensemble.detectors = {std::make_shared<AlwaysPoisoned>()};
  const SanitizeOutput out = sanitize(d, m, cfg);
  EXPECT_EQ(out.report.counts.flagged, d.size());
  for (const auto& s : out.report.samples) {
    EXPECT_EQ(s.initial_prediction, s.label);
    EXPECT_EQ(s.final_prediction, s.label);
  }
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(m.predict(out.clean[i].image), d[i].label);
}

TEST(Sanitize, SecondPassIsANoOp) {
  const auto& b = benchmark();
  const DefendedRun run = sanitize_untrusted(b.poisoned, oracle_pipeline(), benchmark_train_config(5));
  const SanitizeOutput again = sanitize(run.output.clean, run.defender, oracle_pipeline());
  EXPECT_EQ(again.clean, run.output.clean);
  EXPECT_EQ(again.report.counts.flagged, 0u);
}

TEST(Sanitize, ThreadCountDoesNotChangeOutput) {
  const auto& b = benchmark();
  const Model m = train(b.poisoned, benchmark_train_config(6)).model;
  const auto one = sanitize(b.poisoned, m, oracle_pipeline(1));
  const auto eight = sanitize(b.poisoned, m, oracle_pipeline(8));
  EXPECT_EQ(one.clean, eight.clean);
  ASSERT_EQ(one.report.samples.size(), eight.report.samples.size());
  for (std::size_t i = 0; i < one.report.samples.size(); ++i)
    EXPECT_EQ(one.report.samples[i].rho_2, eight.report.samples[i].rho_2);
}

TEST(Sanitize, PersistedBudgetIsUsed) {
  const auto& b = benchmark();
  const Model m = train(b.clean, benchmark_train_config(7)).model;
  PipelineConfig cfg = oracle_pipeline();
  cfg.persisted_budget = compute_budget(0.1, 0.05, 200);
  const auto out = sanitize(b.poisoned, m, cfg);
  ASSERT_TRUE(out.report.budget.has_value());
  EXPECT_NEAR(out.report.budget->epsilon, 0.105, 1e-12);
  for (const auto& s : out.report.samples)
    if (s.flagged) EXPECT_NEAR(s.epsilon, 0.105, 1e-12);
}

TEST(Sanitize, InferenceModeNeedsBudget) {
  const auto& b = benchmark();
  const Model m = Model::zeros(Architecture::linear, b.clean.shape(), 3);
  PipelineConfig cfg = oracle_pipeline();
  cfg.mode = PipelineMode::inference_time;
  EXPECT_THROW(sanitize(b.poisoned, m, cfg), ValidationError);
}

TEST(Sanitize, RejectsMismatchedDetections) {
  const auto& b = benchmark();
  const Model m = Model::zeros(Architecture::linear, b.clean.shape(), 3);
  EXPECT_THROW(sanitize_with_detections(b.clean, {}, m, oracle_pipeline()), ValidationError);
}

TEST(BelievedClean, DropsFlaggedSamples) {
  const auto& b = benchmark();
  const auto det = detect_all(b.poisoned, oracle_pipeline().ensemble);
  const Dataset kept = believed_clean_subset(b.poisoned, det);
  EXPECT_EQ(kept.size(), b.poisoned.size() - b.plan.entries.size());
  for (const auto& s : kept.samples()) EXPECT_EQ(s.provenance, Provenance::clean);
}

TEST(Guard, CleanQueryIsUntouched) {
  const auto& b = benchmark();
  const Model m = train(b.clean, benchmark_train_config(8)).model;
  PipelineConfig cfg = oracle_pipeline();
  cfg.mode = PipelineMode::inference_time;
  cfg.persisted_budget = compute_budget(0.5, 0.05, 200);
  const GuardResult g = guard_inference(b.held_out[0].image, m, cfg, Provenance::clean);
  EXPECT_FALSE(g.recovery.has_value());
  EXPECT_EQ(g.image, b.held_out[0].image);
  EXPECT_EQ(g.prediction, g.raw_prediction);
}

TEST(Guard, FlaggedQueryIsCorrectedInsideBudget) {
  std::mt19937_64 rng(3);
  const auto c = make_margin_case(rng, 0.6, 0.2);
  PipelineConfig cfg = oracle_pipeline();
  cfg.mode = PipelineMode::inference_time;
  cfg.persisted_budget = compute_budget(0.2, 0.05, 200);
  const GuardResult g = guard_inference(c.poisoned, c.model, cfg, Provenance::poisoned);
  ASSERT_TRUE(g.recovery.has_value());
  EXPECT_EQ(g.prediction, c.label);
  EXPECT_LE(linf_distance(g.image, c.poisoned), 0.21 + 1e-6);
}

TEST(Guard, MissingBudgetIsRejected) {
  std::mt19937_64 rng(3);
  const auto c = make_margin_case(rng, 0.6, 0.2);
  PipelineConfig cfg = oracle_pipeline();
  cfg.mode = PipelineMode::inference_time;
  EXPECT_THROW(guard_inference(c.poisoned, c.model, cfg, Provenance::poisoned), ValidationError);
}
