#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <gtest/gtest.h>

#include "bf/error.hpp"
#include "bf/metrics.hpp"
#include "bf/report.hpp"

using namespace bf;

namespace {

const DatasetFixture& fixture(std::string_view name) {
  for (const auto& f : reference_count_tables())
    if (f.dataset == name) return f;
  throw std::runtime_error("no fixture");
}

ConfusionCounts counts(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn) {
  ConfusionCounts c;
  c.tp = tp;
  c.tn = tn;
  c.fp = fp;
  c.fn = fn;
  return c;
}

void expect_pct(const Ratio& r, double pct, const std::string& what = {}) {
  ASSERT_TRUE(r.defined) << what;
  EXPECT_NEAR(100.0 * r.value, pct, 0.01) << what;
}

// std::vector<bool> is not contiguous.
std::unique_ptr<bool[]> contiguous(const std::vector<bool>& v) {
  auto out = std::make_unique<bool[]>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

} // namespace

TEST(Metrics, MajorityVoteRows) {
  struct Row {
    const char* dataset;
    double acc, prec, rec, f1;
    const char* f1_text;
  };
  for (const Row r : {Row{"PubFig", 95.00, 94.44, 100.00, 97.14, "97.14"},
                      Row{"LFW", 99.00, 98.80, 100.00, 99.39, "99.39"},
                      Row{"CIFAR-10", 98.00, 97.78, 100.00, 98.88, "98.88"}}) {
    const MetricSet m = metrics(fixture(r.dataset).rows[5].counts);
    expect_pct(m.accuracy, r.acc, r.dataset);
    expect_pct(m.precision, r.prec, r.dataset);
    expect_pct(m.recall, r.rec, r.dataset);
    expect_pct(m.f1, r.f1, r.dataset);
    EXPECT_EQ(format_percent(m.f1.value), r.f1_text);
  }
}

TEST(Metrics, PerDetectorAccuracyAndPrecision) {
  // accuracy and precision rows for Grok, Gemini, Claude, o4-mini-high, GPT4.1
  const std::map<std::string, std::array<std::array<double, 2>, 5>> want{
      {"PubFig", {{{86.00, 86.67}, {65.00, 61.11}, {54.00, 52.22}, {99.00, 98.89}, {100.00, 100.00}}}},
      {"LFW", {{{83.00, 79.52}, {78.00, 73.49}, {94.00, 92.77}, {100.00, 100.00}, {100.00, 100.00}}}},
      {"CIFAR-10", {{{96.00, 95.56}, {73.00, 70.00}, {90.00, 100.00}, {99.00, 98.89}, {98.00, 97.78}}}}};
  for (const auto& [name, rows] : want) {
    for (std::size_t k = 0; k < 5; ++k) {
      const MetricSet m = metrics(fixture(name).rows[k].counts);
      expect_pct(m.accuracy, rows[k][0], name);
      expect_pct(m.precision, rows[k][1], name);
    }
  }
}

TEST(Breakdown, RowNormalizedPercentages) {
  // TP, TN, FP, FN per detector (five models, then majority)
  const std::map<std::string, std::array<std::array<double, 4>, 6>> want{
      {"PubFig",
       {{{86.67, 80.00, 13.33, 20.00},
         {61.11, 100.00, 38.89, 0.00},
         {52.22, 70.00, 47.78, 30.00},
         {98.89, 100.00, 1.11, 0.00},
         {100.00, 100.00, 0.00, 0.00},
         {94.44, 100.00, 5.56, 0.00}}}},
      {"LFW",
       {{{79.52, 100, 20.48, 0},
         {73.49, 100, 26.51, 0},
         {92.77, 100, 7.23, 0},
         {100, 100, 0, 0},
         {100, 100, 0, 0},
         {98.80, 100, 1.20, 0}}}},
      {"CIFAR-10",
       {{{95.56, 100.00, 4.44, 0.00},
         {70.00, 100.00, 30.00, 0.00},
         {100.00, 0.00, 0.00, 100.00},
         {98.89, 100.00, 1.11, 0.00},
         {97.78, 100.00, 2.22, 0.00},
         {97.78, 100.00, 2.22, 0.00}}}}};
  for (const auto& [name, rows] : want) {
    for (std::size_t k = 0; k < 6; ++k) {
      const auto b = outcome_breakdown(fixture(name).rows[k].counts);
      const std::string tag = name + "/" + std::string(fixture(name).rows[k].detector);
      expect_pct(b.tp, rows[k][0], tag);
      expect_pct(b.tn, rows[k][1], tag);
      expect_pct(b.fp, rows[k][2], tag);
      expect_pct(b.fn, rows[k][3], tag);
    }
  }
}

TEST(Fixtures, DecisionTablesReplayToCountTables) {
  std::ifstream in(std::string(BF_TEST_DATA_DIR) + "/decision_tables.txt");
  ASSERT_TRUE(in);
  const std::map<std::string, std::string_view> names{{"pubfig", "PubFig"}, {"lfw", "LFW"}, {"cifar10", "CIFAR-10"}};
  std::map<std::string_view, std::array<std::pair<std::vector<bool>, std::vector<bool>>, 6>> votes;
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string ds, codes;
    ls >> ds >> codes;
    ASSERT_EQ(codes.size(), 7u) << line;
    auto& per = votes[names.at(ds)];
    for (std::size_t k = 0; k < 6; ++k) {
      per[k].first.push_back(codes[0] == 'P');
      per[k].second.push_back(codes[k + 1] == 'P');
    }
    // the majority column is the 3-of-5 vote of the model columns
    std::vector<Verdict> v;
    for (std::size_t k = 1; k <= 5; ++k) v.push_back(codes[k] == 'P' ? Verdict::poison() : Verdict::clean());
    EXPECT_EQ(majority_vote(v, 3).poisoned(), codes[6] == 'P') << line;
    ++lines;
  }
  EXPECT_EQ(lines, 300u);
  for (const auto& f : reference_count_tables()) {
    auto& per = votes.at(f.dataset);
    for (std::size_t k = 0; k < 6; ++k) {
      const auto t = contiguous(per[k].first);
      const auto j = contiguous(per[k].second);
      const ConfusionCounts c = confusion(std::span<const bool>(t.get(), per[k].first.size()),
                                          std::span<const bool>(j.get(), per[k].second.size()));
      EXPECT_EQ(c, f.rows[k].counts) << f.dataset << "/" << f.rows[k].detector;
    }
  }
}

TEST(Confusion, FromDetectionRecords) {
  std::vector<DetectionRecord> r(4);
  r[0].truth = Provenance::clean;
  r[1].truth = Provenance::poisoned;
  r[1].aggregate = Verdict::poison();
  r[2].truth = Provenance::recovered;
  r[2].aggregate = Verdict::poison();
  r[3].truth = Provenance::poisoned;
  EXPECT_EQ(confusion(r), counts(1, 1, 1, 1));
  r[3].truth.reset();
  EXPECT_THROW(confusion(r), ValidationError);
}

TEST(Metrics, UndefinedDenominators) {
  const MetricSet m = metrics(counts(0, 10, 0, 0));
  EXPECT_TRUE(m.accuracy.defined);
  EXPECT_DOUBLE_EQ(m.accuracy.value, 1.0);
  EXPECT_FALSE(m.precision.defined);
  EXPECT_EQ(m.precision.value, 0.0);
  EXPECT_FALSE(m.recall.defined);
  EXPECT_EQ(m.recall.value, 0.0);
  EXPECT_FALSE(m.f1.defined);
  const Json j = metrics_json(m);
  EXPECT_TRUE(j["precision"].is_null());
  EXPECT_THROW(metrics(counts(0, 0, 0, 0)), ValidationError);
}

TEST(Metrics, AccuracyIgnoresWhichClassIsPositive) {
  const ConfusionCounts c = counts(78, 8, 12, 2);
  const ConfusionCounts swapped = counts(8, 78, 2, 12);
  EXPECT_DOUBLE_EQ(metrics(c).accuracy.value, metrics(swapped).accuracy.value);
  EXPECT_NE(metrics(c).precision.value, metrics(swapped).precision.value);
  EXPECT_NE(metrics(c).recall.value, metrics(swapped).recall.value);
}

TEST(FormatPercent, RoundsHalfUp) {
  EXPECT_EQ(format_percent(0.944444), "94.44");
  EXPECT_EQ(format_percent(0.97142857), "97.14");
  EXPECT_EQ(format_percent(1.0), "100.00");
  EXPECT_EQ(format_percent(0.0), "0.00");
  EXPECT_EQ(format_percent(0.12345), "12.35");
  EXPECT_EQ(format_percent(0.00005), "0.01");
  EXPECT_EQ(format_percent(5.0 / 90.0), "5.56");
}

TEST(Asr, CountsTargetPredictions) {
  const Model m = Model::linear(Shape{1, 1, 1}, 2, {0.f, 1.f}, {0.f, -0.5f});
  const std::vector<LabeledSample> probes{{Image(Shape{1, 1, 1}, {0.9f}), 0, Provenance::poisoned},
                                          {Image(Shape{1, 1, 1}, {0.1f}), 0, Provenance::poisoned},
                                          {Image(Shape{1, 1, 1}, {0.7f}), 0, Provenance::poisoned},
                                          {Image(Shape{1, 1, 1}, {0.2f}), 0, Provenance::poisoned}};
  EXPECT_DOUBLE_EQ(attack_success_rate(m, probes, 1), 0.5);
  EXPECT_THROW(attack_success_rate(m, {}, 1), ValidationError);
}

TEST(Histogram, BinsAndClamps) {
  const std::vector<double> v{0.0, 0.24, 0.25, 0.99, 1.0, 1.5, -0.2};
  const Histogram h = make_histogram(v, 0.0, 1.0, 4);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{3, 1, 0, 3}));
  const Histogram flat = make_histogram(v, 0.5, 0.5, 3);
  EXPECT_EQ(flat.counts[0], v.size());
}

TEST(NoiseStats, MeansAndRanges) {
  std::vector<RecoveryResult> r(3);
  r[0].rho_inf = 0.1;
  r[0].rho_2 = 1.0;
  r[1].rho_inf = 0.2;
  r[1].rho_2 = 2.0;
  r[2].rho_inf = 0.3;
  r[2].rho_2 = 3.0;
  for (auto& x : r) x.recovered = Image::filled(Shape{2, 2, 1}, 0.f);
  const NoiseStats s = noise_stats(r, 0.3, 3);
  EXPECT_EQ(s.count, 3u);
  EXPECT_NEAR(s.mean_rho_inf, 0.2, 1e-12);
  EXPECT_NEAR(s.mean_rho_2, 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.rho_inf_hist.hi, 0.3);
  EXPECT_DOUBLE_EQ(s.rho_2_hist.hi, 0.6);
  const Json j = noise_stats_json(s);
  EXPECT_EQ(j["count"], 3);
}

TEST(NoiseRow, ReferenceFormatting) {
  EXPECT_EQ(render_noise_row(format_noise_row("PubFig", 0.22334, 14.3512)), "PubFig | 0.2233 | 14.351");
  const NoiseRow lfw = format_noise_row("LFW", 0.33331, 18.0904);
  EXPECT_EQ(lfw.rho_inf, "0.3333");
  EXPECT_EQ(lfw.rho_2, "18.09");
  const NoiseRow cifar = format_noise_row("CIFAR-10", 0.09126, 4.2581);
  EXPECT_EQ(cifar.rho_inf, "0.0913");
  EXPECT_EQ(cifar.rho_2, "4.258");
}

TEST(Report, BudgetJsonRoundTrip) {
  BudgetResult b = compute_budget(0.52, 0.05, 200);
  b.per_image_deltas = {0.5, 0.52};
  b.mode = "percentile(90)";
  const BudgetResult back = budget_from_json(budget_json(b));
  EXPECT_EQ(back.delta_max, b.delta_max);
  EXPECT_DOUBLE_EQ(back.epsilon, b.epsilon);
  EXPECT_DOUBLE_EQ(back.alpha, b.alpha);
  EXPECT_EQ(back.per_image_deltas, b.per_image_deltas);
  EXPECT_EQ(back.mode, b.mode);
  BudgetResult empty;
  EXPECT_TRUE(budget_json(empty)["delta_max"].is_null());
  EXPECT_FALSE(budget_from_json(budget_json(empty)).delta_max.has_value());
}

TEST(Report, EvaluationOutputs) {
  const std::vector<EvaluationRow> rows{{"PubFig", "Majority", counts(85, 10, 5, 0)}};
  const Json j = evaluation_json(rows);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["confusion"]["tp"], 85);
  const std::string csv = evaluation_csv(rows);
  EXPECT_NE(csv.find("95.00"), std::string::npos);
  EXPECT_NE(csv.find("97.14"), std::string::npos);
  const std::string table = evaluation_table(rows);
  EXPECT_NE(table.find("94.44"), std::string::npos);
  EXPECT_EQ(confusion_json(rows[0].counts)["positive_class"], "clean");
}

TEST(Report, ReadJsonErrors) {
  EXPECT_THROW(read_json("/nonexistent/file.json"), ValidationError);
}
