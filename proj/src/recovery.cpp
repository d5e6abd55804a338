#include "bf/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "bf/error.hpp"
#include "bf/parallel.hpp"

namespace bf {

std::string_view to_string(BudgetMode m) {
  switch (m) {
  case BudgetMode::global_max: return "global_max";
  case BudgetMode::percentile: return "percentile";
  case BudgetMode::per_image_capped: return "per_image_capped";
  }
  return "?";
}

BudgetMode budget_mode_from_string(std::string_view s) {
  if (s == "global_max") return BudgetMode::global_max;
  if (s == "percentile") return BudgetMode::percentile;
  if (s == "per_image_capped") return BudgetMode::per_image_capped;
  throw ValidationError(fmt::format("unknown budget mode '{}'", s));
}

void RecoveryConfig::validate() const {
  if (steps < 1) throw ValidationError("recovery steps must be at least 1");
  if (!(safety_margin >= 0.0) || !std::isfinite(safety_margin))
    throw ValidationError(fmt::format("safety margin must be >= 0, got {}", safety_margin));
  if (budget_mode == BudgetMode::percentile && !(percentile > 0.0 && percentile <= 100.0))
    throw ValidationError(fmt::format("percentile must lie in (0,100], got {}", percentile));
}

std::string RecoveryConfig::mode_label() const {
  if (budget_mode == BudgetMode::percentile) return fmt::format("percentile({:g})", percentile);
  return std::string(to_string(budget_mode));
}

double BudgetResult::epsilon_for(std::size_t i) const {
  return per_image_epsilons.empty() ? epsilon : per_image_epsilons.at(i);
}

double nearest_rank_percentile(std::span<const double> values, double p) {
  if (values.empty()) throw ValidationError("percentile of an empty list");
  if (!(p > 0.0 && p <= 100.0)) throw ValidationError(fmt::format("percentile must lie in (0,100], got {}", p));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0 - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

BudgetResult compute_budget(double delta_max, double safety_margin, std::uint32_t steps) {
  if (!(delta_max >= 0.0) || !(safety_margin >= 0.0))
    throw ValidationError("budget inputs must be non-negative");
  if (steps < 1) throw ValidationError("recovery steps must be at least 1");
  BudgetResult b;
  b.delta_max = delta_max;
  b.epsilon = (1.0 + safety_margin) * delta_max;
  b.alpha = b.epsilon / steps;
  return b;
}

namespace {

inline float signum(float g) {
  return g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
}

bool in_ball_and_range(std::span<const float> x, std::span<const float> c, double eps) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0f || x[i] > 1.0f) return false;
    if (std::abs(static_cast<double>(x[i]) - c[i]) > eps) return false;
  }
  return true;
}

// Projected signed descent from x = center. Returns the number of steps run.
std::uint32_t signed_descent(const Model& model, std::span<const float> center, std::uint32_t label, double eps,
                             double alpha, std::uint32_t steps, bool early_stop, std::vector<float>& x,
                             const IterateObserver& observer) {
  x.assign(center.begin(), center.end());
  std::vector<float> grad(x.size());
  std::uint32_t t = 0;
  for (; t < steps; ++t) {
    if (early_stop && model.predict(x) == label) break;
    const double loss = model.input_gradient(x, label, grad);
    if (!std::isfinite(loss)) throw RuntimeError(fmt::format("non-finite loss at step {}", t));
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(grad[i])) throw RuntimeError(fmt::format("non-finite gradient at step {}, element {}", t, i));
      x[i] = static_cast<float>(static_cast<double>(x[i]) - alpha * signum(grad[i]));
    }
    project_ball_and_range_inplace(x, center, eps);
#ifndef NDEBUG
    if (!in_ball_and_range(x, center, eps)) throw RuntimeError(fmt::format("iterate left the ball at step {}", t));
#endif
    if (observer) observer(t, x);
  }
  return t;
}

void check_flagged(const Model& model, std::span<const LabeledSample> flagged) {
  for (const auto& s : flagged) {
    require_same_shape(model.input_shape(), s.image.shape(), "recovery input");
    if (s.label >= model.num_classes())
      throw ValidationError(fmt::format("label {} out of range for {} classes", s.label, model.num_classes()));
  }
}

} // namespace

BudgetResult probe_trigger_magnitude(const Model& model, std::span<const LabeledSample> flagged, std::uint32_t steps,
                                     std::size_t threads) {
  if (flagged.empty()) throw ValidationError("probe needs at least one flagged image");
  if (steps < 1) throw ValidationError("recovery steps must be at least 1");
  check_flagged(model, flagged);
  constexpr double probe_eps = 1.0;
  const double probe_alpha = probe_eps / steps;

  BudgetResult b;
  b.per_image_deltas.assign(flagged.size(), 0.0);
  parallel_for(flagged.size(), threads, [&](std::size_t i) {
    std::vector<float> x;
    const auto& s = flagged[i];
    signed_descent(model, s.image.data(), s.label, probe_eps, probe_alpha, steps, false, x, {});
    b.per_image_deltas[i] = linf_distance(x, s.image.data());
  });
  b.delta_max = *std::max_element(b.per_image_deltas.begin(), b.per_image_deltas.end());
  return b;
}

BudgetResult resolve_budget(const BudgetResult& probe, const RecoveryConfig& cfg) {
  cfg.validate();
  if (!probe.delta_max) throw ValidationError("cannot derive a budget without a probed delta_max");
  const double scale = 1.0 + cfg.safety_margin;
  BudgetResult b = compute_budget(*probe.delta_max, cfg.safety_margin, cfg.steps);
  b.per_image_deltas = probe.per_image_deltas;
  b.mode = cfg.mode_label();
  switch (cfg.budget_mode) {
  case BudgetMode::global_max:
    break;
  case BudgetMode::percentile:
    b.epsilon = scale * nearest_rank_percentile(probe.per_image_deltas, cfg.percentile);
    b.alpha = b.epsilon / cfg.steps;
    break;
  case BudgetMode::per_image_capped:
    b.per_image_epsilons.reserve(probe.per_image_deltas.size());
    for (double d : probe.per_image_deltas) b.per_image_epsilons.push_back(std::min(scale * d, b.epsilon));
    break;
  }
  return b;
}

RecoveryResult corrective_pgd(const Model& model, const Image& x_p, std::uint32_t y_p, double epsilon, double alpha,
                              const RecoveryConfig& cfg, const IterateObserver& observer) {
  cfg.validate();
  require_same_shape(model.input_shape(), x_p.shape(), "recovery input");
  if (!(epsilon >= 0.0) || !(alpha >= 0.0)) throw ValidationError("recovery budget must be non-negative");
  if (y_p >= model.num_classes()) throw ValidationError(fmt::format("label {} out of range", y_p));

  RecoveryResult r;
  r.epsilon = epsilon;
  r.initial_prediction = model.predict(x_p);
  std::vector<float> x;
  r.iterations_run = signed_descent(model, x_p.data(), y_p, epsilon, alpha, cfg.steps, cfg.early_stop, x, observer);
  if (!in_ball_and_range(x, x_p.data(), epsilon)) throw RuntimeError("recovered image left the budget ball");
  r.recovered = Image(x_p.shape(), std::move(x));
  r.rho_inf = linf_distance(r.recovered, x_p);
  r.rho_2 = l2_distance(r.recovered, x_p);
  r.final_prediction = model.predict(r.recovered);
  r.success = r.final_prediction == y_p;
  return r;
}

RecoveryResult corrective_pgd(const Model& model, const Image& x_p, std::uint32_t y_p, const BudgetResult& budget,
                              const RecoveryConfig& cfg, const IterateObserver& observer) {
  return corrective_pgd(model, x_p, y_p, budget.epsilon, budget.alpha, cfg, observer);
}

std::vector<RecoveryResult> recover_with_budget(const Model& model, std::span<const LabeledSample> flagged,
                                                const BudgetResult& budget, const RecoveryConfig& cfg,
                                                std::size_t threads) {
  cfg.validate();
  check_flagged(model, flagged);
  if (!budget.per_image_epsilons.empty() && budget.per_image_epsilons.size() != flagged.size())
    throw ValidationError("per-image budget does not match the flagged set");
  std::vector<RecoveryResult> out(flagged.size());
  parallel_for(flagged.size(), threads, [&](std::size_t i) {
    const auto& s = flagged[i];
    const double eps = budget.epsilon_for(i);
    try {
      out[i] = corrective_pgd(model, s.image, s.label, eps, eps / cfg.steps, cfg);
    } catch (const RuntimeError& e) {
      RecoveryResult r;
      r.recovered = s.image;
      r.epsilon = eps;
      r.initial_prediction = r.final_prediction = model.predict(s.image);
      r.error = e.what();
      out[i] = std::move(r);
    }
  });
  return out;
}

RecoverySet recover_set(const Model& model, std::span<const LabeledSample> flagged, const RecoveryConfig& cfg,
                        std::size_t threads) {
  cfg.validate();
  RecoverySet out;
  if (flagged.empty()) return out;
  out.budget = resolve_budget(probe_trigger_magnitude(model, flagged, cfg.steps, threads), cfg);
  out.results = recover_with_budget(model, flagged, *out.budget, cfg, threads);
  return out;
}

} // namespace bf
