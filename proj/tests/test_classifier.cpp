#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bf/classifier.hpp"
#include "bf/error.hpp"
#include "bf/synthetic.hpp"
#include "support/constructions.hpp"

using namespace bf;

namespace {

// Central differences on the reference loss; coordinates where a hidden
// unit changes sign inside [x-h, x+h] are skipped.
struct FdCheck {
  double rel_error = 0.0;
  std::size_t compared = 0;
};

FdCheck finite_difference_check(const Model& m, const Image& x, std::uint32_t label, double h = 1e-3) {
  std::vector<float> g(x.size());
  m.input_gradient(x.data(), label, g);
  std::vector<double> xd(x.data().begin(), x.data().end());
  std::vector<double> pre0;
  oracle::reference_loss(m, xd, label, &pre0);
  double diff2 = 0.0, ref2 = 0.0;
  FdCheck out;
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double keep = xd[i];
    std::vector<double> pre_p, pre_m;
    xd[i] = keep + h;
    const double lp = oracle::reference_loss(m, xd, label, &pre_p);
    xd[i] = keep - h;
    const double lm = oracle::reference_loss(m, xd, label, &pre_m);
    xd[i] = keep;
    bool kink = false;
    for (std::size_t k = 0; k < pre0.size(); ++k) {
      if ((pre_p[k] > 0) != (pre0[k] > 0) || (pre_m[k] > 0) != (pre0[k] > 0)) kink = true;
    }
    if (kink) continue;
    const double fd = (lp - lm) / (2 * h);
    diff2 += (fd - g[i]) * (fd - g[i]);
    ref2 += fd * fd;
    ++out.compared;
  }
  out.rel_error = ref2 > 0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2);
  return out;
}

Dataset small_benchmark(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  return gen_synthetic_identities(spec);
}

} // namespace

TEST(Model, LinearLogitsMatchHandComputation) {
  const Shape dims{1, 2, 1};
  const Model m = Model::linear(dims, 2, {1.f, -1.f, 0.5f, 2.f}, {0.1f, -0.2f});
  const Image x(dims, {0.5f, 0.25f});
  const auto z = m.logits(x);
  EXPECT_NEAR(z[0], 0.1 + 0.5 - 0.25, 1e-7);
  EXPECT_NEAR(z[1], -0.2 + 0.25 + 0.5, 1e-7);
  EXPECT_EQ(m.predict(x), 1u);
}

TEST(Model, TiesBreakTowardLowestIndex) {
  const Model m = Model::zeros(Architecture::linear, Shape{2, 2, 1}, 4);
  EXPECT_EQ(m.predict(Image::filled(Shape{2, 2, 1}, 0.3f)), 0u);
}

TEST(Model, LossIsStableForHugeLogits) {
  const Shape dims{1, 1, 1};
  const Model m = Model::linear(dims, 2, {0.f, 0.f}, {1000.f, -1000.f});
  const Image x = Image::filled(dims, 0.5f);
  EXPECT_NEAR(m.loss(x, 0), 0.0, 1e-12);
  EXPECT_NEAR(m.loss(x, 1), 2000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(m.loss(x, 1)));
}

TEST(Model, RejectsBadInputs) {
  const Model m = Model::zeros(Architecture::mlp1, Shape{2, 2, 3}, 3, 8);
  EXPECT_THROW(m.predict(Image::filled(Shape{2, 2, 1}, 0.f)), ValidationError);
  EXPECT_THROW(m.loss(Image::filled(Shape{2, 2, 3}, 0.f), 3), ValidationError);
  EXPECT_THROW(Model::linear(Shape{1, 1, 1}, 2, {1.f}, {0.f, 0.f}), ValidationError);
}

TEST(Model, ZeroModelHasZeroInputGradient) {
  const Model m = Model::zeros(Architecture::mlp1, Shape{3, 3, 3}, 3, 16);
  std::mt19937_64 rng(1);
  const Tensor g = m.input_gradient(oracle::random_image(Shape{3, 3, 3}, rng), 1);
  for (float v : g.data()) EXPECT_EQ(v, 0.f);
}

TEST(Model, InputGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const Shape dims{1 + static_cast<std::uint32_t>(rng() % 4), 1 + static_cast<std::uint32_t>(rng() % 4),
                     (rng() & 1) ? 3u : 1u};
    const auto k = 2 + static_cast<std::uint32_t>(rng() % 4);
    const auto arch = (trial % 2 == 0) ? Architecture::mlp1 : Architecture::linear;
    const Model m = Model::random(arch, dims, k, 4 + static_cast<std::uint32_t>(rng() % 12), rng());
    const Image x = oracle::random_image(dims, rng);
    const auto label = static_cast<std::uint32_t>(rng() % k);
    const FdCheck c = finite_difference_check(m, x, label);
    EXPECT_LT(c.rel_error, 1e-4) << "trial " << trial;
    EXPECT_GT(c.compared, 0u);
  }
}

TEST(Model, LinearGradientHasClosedForm) {
  // d/dx CE = sum_k p_k w_k - w_y
  std::mt19937_64 rng(7);
  const Shape dims{2, 2, 1};
  const Model m = Model::random(Architecture::linear, dims, 3, 0, 3);
  const Image x = oracle::random_image(dims, rng);
  const auto p = m.probabilities(x.data());
  const Tensor g = m.input_gradient(x, 2);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    double want = -m.w1()[2 * dims.size() + i];
    for (std::size_t c = 0; c < 3; ++c) want += p[c] * m.w1()[c * dims.size() + i];
    EXPECT_NEAR(g[i], want, 1e-6);
  }
}

TEST(Model, FeatureDistanceGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Shape dims{2, 2, 3};
  const Model m = Model::random(Architecture::mlp1, dims, 3, 10, 9);
  const Image z = oracle::random_image(dims, rng);
  const Image t = oracle::random_image(dims, rng);
  const auto target = m.features(t.data());
  std::vector<float> g(dims.size());
  m.feature_distance(z.data(), target, g);
  const double h = 1e-3;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    std::vector<float> zp(z.data().begin(), z.data().end()), zm = zp;
    zp[i] += static_cast<float>(h);
    zm[i] -= static_cast<float>(h);
    std::vector<float> scratch(dims.size());
    const double fp = m.feature_distance(zp, target, scratch);
    const double fm = m.feature_distance(zm, target, scratch);
    const double step = static_cast<double>(zp[i]) - zm[i];
    EXPECT_NEAR(g[i], (fp - fm) / step, 2e-3 * std::max(1.0, std::abs(static_cast<double>(g[i]))));
  }
}

TEST(Model, CheckpointRoundTrip) {
  for (auto arch : {Architecture::linear, Architecture::mlp1}) {
    const Model m = Model::random(arch, Shape{3, 2, 3}, 4, 7, 11);
    const auto bytes = m.encode();
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "BFM1");
    EXPECT_EQ(Model::decode(bytes), m);
  }
}

TEST(Model, CheckpointRejectsCorruption) {
  auto bytes = Model::random(Architecture::mlp1, Shape{2, 2, 1}, 2, 3, 1).encode();
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(Model::decode(truncated), ValidationError);
  bytes[0] = 'Z';
  EXPECT_THROW(Model::decode(bytes), ValidationError);
}

TEST(Model, RandomInitIsSeeded) {
  const Shape dims{2, 2, 3};
  EXPECT_EQ(Model::random(Architecture::mlp1, dims, 3, 8, 4), Model::random(Architecture::mlp1, dims, 3, 8, 4));
  EXPECT_NE(Model::random(Architecture::mlp1, dims, 3, 8, 4), Model::random(Architecture::mlp1, dims, 3, 8, 5));
}

TEST(Train, FitsSyntheticBenchmarkAndGeneralizes) {
  const Dataset train_set = small_benchmark(3);
  SyntheticSpec spec;
  spec.seed = 3;
  const Dataset held = gen_synthetic_identities(spec, 77);
  for (auto arch : {Architecture::linear, Architecture::mlp1}) {
    TrainConfig cfg;
    cfg.architecture = arch;
    cfg.seed = 1;
    cfg.epochs = 20;
    const TrainResult r = train(train_set, cfg);
    EXPECT_GE(r.train_accuracy, 0.99);
    EXPECT_GE(accuracy(r.model, held), 0.99);
    EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
  }
}

TEST(Train, DeterministicForSeed) {
  const Dataset d = small_benchmark(4);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 12;
  EXPECT_EQ(train(d, cfg).model, train(d, cfg).model);
}

TEST(Train, DivergenceIsRuntimeError) {
  const Dataset d = small_benchmark(5);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 1e30;
  EXPECT_THROW(train(d, cfg), RuntimeError);
}

TEST(Softmax, SumsToOneAndHandlesExtremes) {
  const std::vector<double> z{1000.0, 0.0, -1000.0};
  const auto p = softmax(z);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  EXPECT_NEAR(p[0], 1.0, 1e-12);
}
