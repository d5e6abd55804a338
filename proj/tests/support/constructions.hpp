#pragma once

// Shared test oracles and hand-built models. Everything here is computed
// independently of the library code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bf/classifier.hpp"
#include "bf/image.hpp"

namespace bf::oracle {

inline Image random_image(Shape s, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> v(s.size());
  for (auto& x : v) x = static_cast<float>(u(rng));
  return Image(s, std::move(v));
}

// Plain double-precision forward pass read straight from the parameters.
inline std::vector<double> reference_logits(const Model& m, std::span<const double> x,
                                            std::vector<double>* pre = nullptr) {
  auto affine = [](std::span<const float> w, std::span<const float> b, std::span<const double> in) {
    std::vector<double> out(b.size());
    for (std::size_t r = 0; r < b.size(); ++r) {
      double acc = b[r];
      for (std::size_t c = 0; c < in.size(); ++c) acc += static_cast<double>(w[r * in.size() + c]) * in[c];
      out[r] = acc;
    }
    return out;
  };
  if (m.architecture() == Architecture::linear) return affine(m.w1(), m.b1(), x);
  auto h = affine(m.w1(), m.b1(), x);
  if (pre) *pre = h;
  for (auto& v : h) v = std::max(v, 0.0);
  return affine(m.w2(), m.b2(), h);
}

inline double reference_loss(const Model& m, std::span<const double> x, std::uint32_t label,
                             std::vector<double>* pre = nullptr) {
  const auto z = reference_logits(m, x, pre);
  const double zmax = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - zmax);
  return zmax + std::log(s) - z[label];
}

// P(at least k successes) for independent Bernoulli(p_i), by dynamic programming.
inline double poisson_binomial_tail(std::span<const double> p, std::size_t k) {
  std::vector<double> dist(p.size() + 1, 0.0);
  dist[0] = 1.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j > 0; --j) dist[j] = dist[j] * (1.0 - p[i]) + dist[j - 1] * p[i];
    dist[0] *= 1.0 - p[i];
  }
  double tail = 0.0;
  for (std::size_t j = k; j < dist.size(); ++j) tail += dist[j];
  return tail;
}

struct MarginCase {
  Model model;
  Image clean;
  Image poisoned;
  std::uint32_t label = 0;
  double robust_radius = 0.0;
  double trigger_norm = 0.0;
};

// Multi-class linear model whose l-inf robust radius at the clean point is
// exactly `radius`: for every k != y, z_y - z_k = radius * ||w_y - w_k||_1.
// The trigger is additive with l-inf norm at most `trigger_max`.
inline MarginCase make_margin_case(std::mt19937_64& rng, double radius, double trigger_max, Shape dims = {4, 4, 3},
                                   std::uint32_t classes = 3) {
  const std::size_t d = dims.size();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<float> w(classes * d);
  for (auto& v : w) v = static_cast<float>(u(rng));
  const Image xc = random_image(dims, rng, 0.25, 0.75);
  const auto y = static_cast<std::uint32_t>(rng() % classes);

  std::vector<float> b(classes, 0.0f);
  for (std::uint32_t k = 0; k < classes; ++k) {
    if (k == y) continue;
    double dot = 0.0, l1 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = static_cast<double>(w[y * d + i]) - w[k * d + i];
      dot += diff * xc[i];
      l1 += std::abs(diff);
    }
    b[k] = static_cast<float>(dot - radius * l1);
  }

  std::vector<float> xp(d);
  std::uniform_real_distribution<double> mag(0.0, trigger_max);
  for (std::size_t i = 0; i < d; ++i) {
    const double delta = (rng() % 3 == 0) ? ((rng() & 1) ? 1.0 : -1.0) * mag(rng) : 0.0;
    xp[i] = static_cast<float>(std::clamp(xc[i] + delta, 0.0, 1.0));
  }
  Image poisoned(dims, std::move(xp));
  const double tn = linf_distance(poisoned, xc);
  return {Model::linear(dims, classes, std::move(w), std::move(b)), xc, std::move(poisoned), y, radius, tn};
}

// Two-class linear model (class 1 iff w.x + b > 0) where the clean point
// has l-inf margin `radius` and the trigger -trigger*sign(w) flips it to 0.
inline MarginCase make_flip_case(std::mt19937_64& rng, double radius, double trigger, Shape dims = {4, 4, 3}) {
  const std::size_t d = dims.size();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<float> w(2 * d, 0.0f);
  double l1 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    w[d + i] = static_cast<float>(u(rng));
    l1 += std::abs(static_cast<double>(w[d + i]));
  }
  const Image xc = random_image(dims, rng, 0.25, 0.75);
  double dot = 0.0;
  for (std::size_t i = 0; i < d; ++i) dot += static_cast<double>(w[d + i]) * xc[i];
  std::vector<float> b{0.0f, static_cast<float>(radius * l1 - dot)};

  std::vector<float> xp(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double s = w[d + i] > 0 ? 1.0 : (w[d + i] < 0 ? -1.0 : 0.0);
    xp[i] = static_cast<float>(std::clamp(xc[i] - trigger * s, 0.0, 1.0));
  }
  Image poisoned(dims, std::move(xp));
  const double tn = linf_distance(poisoned, xc);
  return {Model::linear(dims, 2, std::move(w), std::move(b)), xc, std::move(poisoned), 1, radius, tn};
}

} // namespace bf::oracle
