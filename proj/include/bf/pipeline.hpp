#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bf/classifier.hpp"
#include "bf/dataset.hpp"
#include "bf/detection.hpp"
#include "bf/recovery.hpp"

namespace bf {

enum class PipelineMode { train_time, inference_time };

std::string_view to_string(PipelineMode m);

struct PipelineConfig {
  EnsembleConfig ensemble;
  RecoveryConfig recovery;
  PipelineMode mode = PipelineMode::train_time;
  // Budget from an earlier training-time run. Required for inference.
  std::optional<BudgetResult> persisted_budget;
  std::size_t threads = 1;

  void validate() const;
};

enum class SampleStatus { passed, recovered, failed };

std::string_view to_string(SampleStatus s);

struct SanitizedSample {
  std::size_t index = 0;
  std::uint32_t label = 0;
  std::optional<Provenance> truth;
  bool flagged = false;
  SampleStatus status = SampleStatus::passed;
  std::size_t poisoned_votes = 0;
  // Recovery diagnostics; meaningful only when flagged.
  double epsilon = 0.0;
  double rho_inf = 0.0;
  double rho_2 = 0.0;
  std::uint32_t iterations = 0;
  std::uint32_t initial_prediction = 0;
  std::uint32_t final_prediction = 0;
  std::optional<std::string> error;
};

struct SanitizationCounts {
  std::size_t flagged = 0;
  std::size_t recovered = 0;
  std::size_t passed = 0;
  std::size_t failed = 0;
};

struct StageTimings {
  double detection_seconds = 0.0;
  double recovery_seconds = 0.0;
  double total_seconds = 0.0;
};

struct SanitizationReport {
  SanitizationCounts counts;
  std::vector<SanitizedSample> samples;
  std::optional<BudgetResult> budget;
  std::string budget_mode;
  StageTimings timings;

  // recovered / flagged, or 1 when nothing was flagged.
  double success_rate() const;
};

struct SanitizeOutput {
  Dataset clean;
  SanitizationReport report;
  std::vector<DetectionRecord> detections;
  // Recovered images by sample index, for writing side-by-side artifacts.
  std::vector<std::pair<std::size_t, RecoveryResult>> recoveries;
};

// Samples whose aggregate vote is clean.
Dataset believed_clean_subset(const Dataset& data, std::span<const DetectionRecord> detections);

// Votes on every sample, recovers the flagged ones against their stored
// label, and returns a dataset of the same size and order. Successfully
// recovered samples carry provenance `recovered`; failed ones pass through
// unchanged and are reported as failed.
SanitizeOutput sanitize(const Dataset& untrusted, const Model& model, const PipelineConfig& cfg);

// Same, reusing votes computed earlier (one record per sample, in order).
SanitizeOutput sanitize_with_detections(const Dataset& untrusted, std::vector<DetectionRecord> detections,
                                        const Model& model, const PipelineConfig& cfg);

struct DefendedRun {
  Model defender;
  SanitizeOutput output;
};

// No trusted model: trains the defender on the believed-clean subset first.
DefendedRun sanitize_untrusted(const Dataset& untrusted, const PipelineConfig& cfg, const TrainConfig& train_cfg);

struct GuardResult {
  Image image;
  DetectionRecord detection;
  std::uint32_t raw_prediction = 0;
  std::uint32_t prediction = 0;
  std::optional<RecoveryResult> recovery;
};

// Inference-time guard. Flagged queries are corrected toward the model's own
// top-1 label on the raw query, inside the persisted budget, and then
// reclassified. Throws ValidationError when no budget was persisted.
GuardResult guard_inference(const Image& query, const Model& model, const PipelineConfig& cfg,
                            std::optional<Provenance> truth = std::nullopt);

} // namespace bf
