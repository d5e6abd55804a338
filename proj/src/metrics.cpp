#include "bf/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bf/error.hpp"

namespace bf {

ConfusionCounts confusion(std::span<const DetectionRecord> records) {
  ConfusionCounts c;
  for (const auto& r : records) {
    if (!r.truth) throw ValidationError(fmt::format("detection record {} has no ground truth", r.index));
    const bool truth_poisoned = *r.truth == Provenance::poisoned;
    const bool judged = r.aggregate.poisoned();
    if (!truth_poisoned) (judged ? c.fp : c.tp) += 1;
    else (judged ? c.tn : c.fn) += 1;
  }
  return c;
}

ConfusionCounts confusion(std::span<const bool> truth_poisoned, std::span<const bool> judged_poisoned) {
  if (truth_poisoned.size() != judged_poisoned.size()) throw ValidationError("truth and judgement lengths differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth_poisoned.size(); ++i) {
    if (!truth_poisoned[i]) (judged_poisoned[i] ? c.fp : c.tp) += 1;
    else (judged_poisoned[i] ? c.tn : c.fn) += 1;
  }
  return c;
}

namespace {

Ratio ratio(double num, double den) {
  if (den == 0.0) return {};
  return {num / den, true};
}

} // namespace

MetricSet metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValidationError("metrics of empty confusion counts");
  MetricSet m;
  m.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  m.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  m.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  if (m.precision.defined && m.recall.defined)
    m.f1 = ratio(2.0 * m.precision.value * m.recall.value, m.precision.value + m.recall.value);
  return m;
}

OutcomeBreakdown outcome_breakdown(const ConfusionCounts& c) {
  const auto clean = static_cast<double>(c.clean());
  const auto poisoned = static_cast<double>(c.poisoned());
  return {ratio(static_cast<double>(c.tp), clean), ratio(static_cast<double>(c.tn), poisoned),
          ratio(static_cast<double>(c.fp), clean), ratio(static_cast<double>(c.fn), poisoned)};
}

std::string format_percent(double fraction) {
  if (!std::isfinite(fraction)) throw ValidationError("cannot format a non-finite percentage");
  // Work in hundredths of a percent; the tiny bias keeps exact halves like
  // 0.12345 (stored slightly low) rounding up.
  const double hundredths = std::floor(std::abs(fraction) * 10000.0 + 0.5 + 1e-7);
  const auto n = static_cast<long long>(hundredths);
  return fmt::format("{}{}.{:02}", fraction < 0 && n != 0 ? "-" : "", n / 100, n % 100);
}

double attack_success_rate(const Model& model, std::span<const LabeledSample> probes, std::uint32_t target_class) {
  if (probes.empty()) throw ValidationError("attack success rate needs at least one probe");
  if (target_class >= model.num_classes()) throw ValidationError("target class out of range");
  std::size_t hits = 0;
  for (const auto& p : probes) hits += model.predict(p.image) == target_class ? 1 : 0;
  return static_cast<double>(hits) / probes.size();
}

Histogram make_histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  if (!(hi >= lo)) throw ValidationError("histogram range is inverted");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  const double width = (hi - lo) / bins;
  for (double v : values) {
    std::size_t b = 0;
    if (width > 0.0) {
      const double pos = std::floor((v - lo) / width);
      b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
    }
    ++h.counts[b];
  }
  return h;
}

NoiseStats noise_stats(std::span<const RecoveryResult> results, double epsilon, std::size_t bins) {
  if (results.empty()) throw ValidationError("noise statistics need at least one result");
  NoiseStats s;
  s.count = results.size();
  std::vector<double> inf, two;
  for (const auto& r : results) {
    inf.push_back(r.rho_inf);
    two.push_back(r.rho_2);
    s.mean_rho_inf += r.rho_inf;
    s.mean_rho_2 += r.rho_2;
  }
  s.mean_rho_inf /= results.size();
  s.mean_rho_2 /= results.size();
  const double d = static_cast<double>(results.front().recovered.size());
  s.rho_inf_hist = make_histogram(inf, 0.0, epsilon, bins);
  s.rho_2_hist = make_histogram(two, 0.0, epsilon * std::sqrt(d), bins);
  return s;
}

namespace {

constexpr std::array<DatasetFixture, 3> kCountTables{{
    {"PubFig",
     {{{"Grok", {78, 8, 12, 2}},
       {"Gemini", {55, 10, 35, 0}},
       {"Claude", {47, 7, 43, 3}},
       {"o4-mini-high", {89, 10, 1, 0}},
       {"GPT4.1", {90, 10, 0, 0}},
       {"Majority", {85, 10, 5, 0}}}}},
    {"LFW",
     {{{"Grok", {66, 17, 17, 0}},
       {"Gemini", {61, 17, 22, 0}},
       {"Claude", {77, 17, 6, 0}},
       {"o4-mini-high", {83, 17, 0, 0}},
       {"GPT4.1", {83, 17, 0, 0}},
       {"Majority", {82, 17, 1, 0}}}}},
    {"CIFAR-10",
     {{{"Grok", {86, 10, 4, 0}},
       {"Gemini", {63, 10, 27, 0}},
       {"Claude", {90, 0, 0, 10}},
       {"o4-mini-high", {89, 10, 1, 0}},
       {"GPT4.1", {88, 10, 2, 0}},
       {"Majority", {88, 10, 2, 0}}}}},
}};

} // namespace

std::span<const DatasetFixture> reference_count_tables() {
  return kCountTables;
}

} // namespace bf
