#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bf/dataset.hpp"
#include "bf/image.hpp"

namespace bf {

enum class VerdictValue { clean, poisoned };

std::string_view to_string(VerdictValue v);
VerdictValue verdict_from_string(std::string_view s);

struct Verdict {
  VerdictValue value = VerdictValue::clean;
  std::string rationale;
  // Detector failed; counted as a clean vote.
  bool abstained = false;

  bool poisoned() const { return value == VerdictValue::poisoned; }

  static Verdict clean(std::string why = {}) { return {VerdictValue::clean, std::move(why), false}; }
  static Verdict poison(std::string why = {}) { return {VerdictValue::poisoned, std::move(why), false}; }
  static Verdict abstain(std::string why) { return {VerdictValue::clean, std::move(why), true}; }
};

// What a detector sees for one sample. `truth` is only available to
// simulation detectors; `index` seeds their per-sample random stream.
struct DetectorInput {
  const Image& image;
  std::optional<Provenance> truth;
  std::uint64_t index = 0;
};

class Detector {
public:
  virtual ~Detector() = default;
  virtual std::string name() const = 0;
  // May throw; the ensemble turns exceptions into abstain votes.
  virtual Verdict evaluate(const DetectorInput& input) const = 0;
};

// Error rates of a simulated detector, clean-as-positive as in the tables:
// false_positive_rate = P(clean flagged poisoned), false_negative_rate =
// P(poisoned flagged clean).
struct DetectorProfile {
  double false_positive_rate = 0.0;
  double false_negative_rate = 0.0;
  std::uint64_t seed = 0;
};

// Ground-truth detector with configurable error rates. The decision for a
// sample is a pure function of (seed, index), so evaluation order and
// threading never change the outcome. Recovered samples count as clean.
Verdict simulated_detector(const DetectorInput& input, const DetectorProfile& profile);

// Poisoned iff the smallest l-inf residual between x and any prototype
// exceeds `threshold`.
Verdict residual_detector(const Image& x, std::span<const Image> prototypes, double threshold);

class SimulatedDetector final : public Detector {
public:
  explicit SimulatedDetector(DetectorProfile profile, std::string label = {});
  std::string name() const override;
  Verdict evaluate(const DetectorInput& input) const override;
  const DetectorProfile& profile() const { return profile_; }

private:
  DetectorProfile profile_;
  std::string label_;
};

class ResidualDetector final : public Detector {
public:
  ResidualDetector(std::vector<Image> prototypes, double threshold);
  std::string name() const override;
  Verdict evaluate(const DetectorInput& input) const override;

private:
  std::vector<Image> prototypes_;
  double threshold_;
};

std::shared_ptr<const Detector> make_oracle_detector();

// Elementwise median image of each class, usable as residual prototypes.
std::vector<Image> class_medians(const Dataset& data);

// ceil(M/2).
std::uint32_t default_threshold(std::size_t num_detectors);

// poisoned iff at least `threshold` verdicts are poisoned. Throws
// ValidationError on an empty list or a threshold outside [1, size].
Verdict majority_vote(std::span<const Verdict> verdicts, std::uint32_t threshold);

struct EnsembleConfig {
  std::vector<std::shared_ptr<const Detector>> detectors;
  std::uint32_t threshold = 0; // 0 selects default_threshold(M)

  std::uint32_t effective_threshold() const;
  void validate() const;
};

struct DetectionRecord {
  std::size_t index = 0;
  std::optional<Provenance> truth;
  std::vector<Verdict> votes;
  Verdict aggregate;
};

// Votes every detector (in configuration order) on one image.
DetectionRecord detect_one(const Image& x, std::optional<Provenance> truth, std::size_t index,
                           const EnsembleConfig& cfg);

// One record per sample in dataset order. Ground truth is taken from each
// sample's provenance. Detector exceptions become abstain votes.
std::vector<DetectionRecord> detect_all(const Dataset& data, const EnsembleConfig& cfg,
                                        std::size_t threads = 1);

// JSON lines: {index, truth, votes, aggregate, rationales, abstained}.
std::string detection_record_json(const DetectionRecord& r);
void write_detections(const std::filesystem::path& path, std::span<const DetectionRecord> records);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);

} // namespace bf
