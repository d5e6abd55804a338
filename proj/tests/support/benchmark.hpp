#pragma once

// Small dirty-label patch benchmark shared by the pipeline tests and the
// acceptance runner.

#include <cstdint>

#include "bf/classifier.hpp"
#include "bf/detection.hpp"
#include "bf/pipeline.hpp"
#include "bf/poisoning.hpp"
#include "bf/synthetic.hpp"

namespace bf::oracle {

struct PatchBenchmark {
  Dataset clean;
  Dataset poisoned;
  Dataset held_out;
  PoisonPlan plan;
  std::vector<LabeledSample> probes; // held-out source images with the trigger
};

inline PatchBenchmark make_patch_benchmark(std::uint64_t seed, double rate = 0.1) {
  SyntheticSpec spec;
  spec.seed = seed;
  Dataset clean = gen_synthetic_identities(spec);
  Dataset held = gen_synthetic_identities(spec, seed + 1000);
  PoisonRequest req;
  req.method = PoisonMethod::patch;
  req.source_class = 0;
  req.target_class = 1;
  req.rate = rate;
  req.patch = PatchTrigger{make_checkerboard_pattern(3, spec.dims.channels, 0.5), spec.dims.height - 3,
                           spec.dims.width - 3, 1.0f};
  PoisonPlan plan = make_poison_plan(clean, req);
  Dataset poisoned = apply_poison_plan(clean, plan);
  auto probes = make_triggered_probes(held, 0, *plan.patch);
  return {std::move(clean), std::move(poisoned), std::move(held), std::move(plan), std::move(probes)};
}

inline TrainConfig benchmark_train_config(std::uint64_t seed) {
  TrainConfig t;
  t.architecture = Architecture::mlp1;
  t.hidden = 64;
  t.epochs = 60;
  t.seed = seed;
  return t;
}

inline PipelineConfig oracle_pipeline(std::size_t threads = 1) {
  PipelineConfig cfg;
  cfg.ensemble.detectors = {make_oracle_detector()};
  cfg.threads = threads;
  return cfg;
}

} // namespace bf::oracle
