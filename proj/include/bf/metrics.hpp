#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bf/classifier.hpp"
#include "bf/dataset.hpp"
#include "bf/detection.hpp"
#include "bf/recovery.hpp"

namespace bf {

// Clean is the positive class throughout:
//   tp = clean judged clean        tn = poisoned judged poisoned
//   fp = clean judged poisoned     fn = poisoned judged clean
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  std::size_t clean() const { return tp + fp; }
  std::size_t poisoned() const { return tn + fn; }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Recovered ground truth counts as clean. Throws ValidationError when a
// record has no ground truth.
ConfusionCounts confusion(std::span<const DetectionRecord> records);
ConfusionCounts confusion(std::span<const bool> truth_poisoned, std::span<const bool> judged_poisoned);

// A ratio whose denominator may be zero; then value is 0 and defined false.
struct Ratio {
  double value = 0.0;
  bool defined = false;
};

struct MetricSet {
  Ratio accuracy;
  Ratio precision;
  Ratio recall;
  Ratio f1;
};

// Throws ValidationError on all-zero counts.
MetricSet metrics(const ConfusionCounts& c);

// Row-normalized breakdown: tp,fp over clean samples; tn,fn over poisoned.
struct OutcomeBreakdown {
  Ratio tp, tn, fp, fn;
};
OutcomeBreakdown outcome_breakdown(const ConfusionCounts& c);

// Fraction rendered as a percentage with two decimals, rounded half-up
// (0.944444 -> "94.44", 0.97142857 -> "97.14").
std::string format_percent(double fraction);

// Share of probes predicted as `target_class`. Throws on an empty list.
double attack_success_rate(const Model& model, std::span<const LabeledSample> probes, std::uint32_t target_class);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};

// Fixed-width bins over [lo, hi]; values at hi land in the last bin and
// values outside are clamped. A zero-width range puts everything in bin 0.
Histogram make_histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

struct NoiseStats {
  std::size_t count = 0;
  double mean_rho_inf = 0.0;
  double mean_rho_2 = 0.0;
  Histogram rho_inf_hist; // over [0, eps]
  Histogram rho_2_hist;   // over [0, eps * sqrt(d)]
};

// `epsilon` sets the histogram ranges; pass the global budget.
NoiseStats noise_stats(std::span<const RecoveryResult> results, double epsilon, std::size_t bins = 20);

// Reference per-model decision counts for the three reference datasets.
struct FixtureRow {
  std::string_view detector;
  ConfusionCounts counts;
};

struct DatasetFixture {
  std::string_view dataset;
  std::array<FixtureRow, 6> rows; // five detectors, then the majority vote
};

std::span<const DatasetFixture> reference_count_tables();

} // namespace bf
