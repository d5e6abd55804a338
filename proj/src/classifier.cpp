#include "bf/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "bf/error.hpp"
#include "bf/rng.hpp"
#include "bf/tensor_io.hpp"

namespace bf {

namespace {

constexpr char kModelMagic[4] = {'B', 'F', 'M', '1'};

void check_size(const std::vector<float>& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw ValidationError(fmt::format("{}: expected {} values, got {}", what, n, v.size()));
  }
}

} // namespace

std::string_view to_string(Architecture a) {
  return a == Architecture::linear ? "linear" : "mlp1";
}

Architecture architecture_from_string(std::string_view s) {
  if (s == "linear") return Architecture::linear;
  if (s == "mlp1") return Architecture::mlp1;
  throw ValidationError(fmt::format("unknown architecture '{}'", s));
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    z += p[k];
  }
  for (auto& v : p) v /= z;
  return p;
}

Model Model::zeros(Architecture arch, Shape dims, std::uint32_t num_classes, std::uint32_t hidden) {
  Model m;
  m.arch_ = arch;
  m.dims_ = dims;
  m.num_classes_ = num_classes;
  const std::size_t d = dims.size();
  if (arch == Architecture::linear) {
    m.hidden_ = 0;
    m.w1_.assign(std::size_t{num_classes} * d, 0.0f);
    m.b1_.assign(num_classes, 0.0f);
  } else {
    m.hidden_ = hidden;
    m.w1_.assign(std::size_t{hidden} * d, 0.0f);
    m.b1_.assign(hidden, 0.0f);
    m.w2_.assign(std::size_t{num_classes} * hidden, 0.0f);
    m.b2_.assign(num_classes, 0.0f);
  }
  m.validate();
  return m;
}

Model Model::random(Architecture arch, Shape dims, std::uint32_t num_classes, std::uint32_t hidden,
                    std::uint64_t seed) {
  Model m = zeros(arch, dims, num_classes, hidden);
  std::mt19937_64 rng(stage_seed(seed, "init"));
  const double d = static_cast<double>(dims.size());
  std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / d));
  for (auto& w : m.w1_) w = static_cast<float>(n1(rng));
  if (arch == Architecture::mlp1) {
    std::normal_distribution<double> n2(0.0, std::sqrt(1.0 / hidden));
    for (auto& w : m.w2_) w = static_cast<float>(n2(rng));
  }
  return m;
}

Model Model::linear(Shape dims, std::uint32_t num_classes, std::vector<float> weights,
                    std::vector<float> bias) {
  Model m;
  m.arch_ = Architecture::linear;
  m.dims_ = dims;
  m.num_classes_ = num_classes;
  m.w1_ = std::move(weights);
  m.b1_ = std::move(bias);
  m.validate();
  return m;
}

Model Model::mlp1(Shape dims, std::uint32_t num_classes, std::uint32_t hidden,
                  std::vector<float> w1, std::vector<float> b1, std::vector<float> w2,
                  std::vector<float> b2) {
  Model m;
  m.arch_ = Architecture::mlp1;
  m.dims_ = dims;
  m.num_classes_ = num_classes;
  m.hidden_ = hidden;
  m.w1_ = std::move(w1);
  m.b1_ = std::move(b1);
  m.w2_ = std::move(w2);
  m.b2_ = std::move(b2);
  m.validate();
  return m;
}

void Model::validate() const {
  if (num_classes_ == 0) throw ValidationError("model needs at least one class");
  const std::size_t d = dims_.size();
  if (d == 0) throw ValidationError("model input dims must be non-zero");
  if (arch_ == Architecture::linear) {
    check_size(w1_, std::size_t{num_classes_} * d, "linear weights");
    check_size(b1_, num_classes_, "linear bias");
    if (!w2_.empty() || !b2_.empty()) throw ValidationError("linear model has second layer");
  } else {
    if (hidden_ == 0) throw ValidationError("mlp1 hidden width must be positive");
    check_size(w1_, std::size_t{hidden_} * d, "mlp1 W1");
    check_size(b1_, hidden_, "mlp1 b1");
    check_size(w2_, std::size_t{num_classes_} * hidden_, "mlp1 W2");
    check_size(b2_, num_classes_, "mlp1 b2");
  }
  for (const auto* v : {&w1_, &b1_, &w2_, &b2_}) {
    for (float w : *v) {
      if (!std::isfinite(w)) throw ValidationError("model weights must be finite");
    }
  }
}

std::size_t Model::feature_size() const {
  return arch_ == Architecture::linear ? num_classes_ : hidden_;
}

void Model::check_input(std::span<const float> x) const {
  if (x.size() != dims_.size()) {
    throw ValidationError(fmt::format("input has {} elements, model expects {} ({})", x.size(),
                                      dims_.size(), dims_.str()));
  }
}

void Model::check_label(std::uint32_t label) const {
  if (label >= num_classes_) {
    throw ValidationError(fmt::format("label {} out of range for {} classes", label, num_classes_));
  }
}

namespace {

// out[r] = bias[r] + sum_c w[r*cols + c] * x[c]
template <class In>
void affine(std::span<const float> w, std::span<const float> bias, std::span<const In> x,
            std::vector<double>& out) {
  const std::size_t rows = bias.size();
  const std::size_t cols = x.size();
  out.assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += double{row[c]} * double{x[c]};
    out[r] = acc + double{bias[r]};
  }
}

// out[c] += sum_r w[r*cols + c] * g[r]
void affine_transpose(std::span<const float> w, std::span<const double> g, std::vector<double>& out) {
  const std::size_t cols = out.size();
  for (std::size_t r = 0; r < g.size(); ++r) {
    if (g[r] == 0.0) continue;
    const float* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += double{row[c]} * g[r];
  }
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

} // namespace

std::vector<double> Model::forward(std::span<const float> x, std::vector<double>* pre) const {
  std::vector<double> out;
  if (arch_ == Architecture::linear) {
    affine<float>(w1_, b1_, x, out);
    return out;
  }
  std::vector<double> hidden;
  affine<float>(w1_, b1_, x, hidden);
  if (pre) *pre = hidden;
  for (auto& h : hidden) h = h > 0.0 ? h : 0.0;
  affine<double>(w2_, b2_, hidden, out);
  return out;
}

std::vector<double> Model::logits(std::span<const float> x) const {
  check_input(x);
  return forward(x, nullptr);
}

std::vector<double> Model::logits(const Image& x) const {
  require_same_shape(x.shape(), dims_, "Model::logits");
  return logits(x.data());
}

std::vector<double> Model::probabilities(std::span<const float> x) const {
  return softmax(logits(x));
}

std::uint32_t Model::predict(std::span<const float> x) const {
  const auto z = logits(x);
  std::uint32_t best = 0;
  for (std::uint32_t k = 1; k < z.size(); ++k) {
    if (z[k] > z[best]) best = k;
  }
  return best;
}

std::uint32_t Model::predict(const Image& x) const {
  require_same_shape(x.shape(), dims_, "Model::predict");
  return predict(x.data());
}

double Model::loss(std::span<const float> x, std::uint32_t label) const {
  check_label(label);
  const auto z = logits(x);
  return log_sum_exp(z) - z[label];
}

double Model::loss(const Image& x, std::uint32_t label) const {
  require_same_shape(x.shape(), dims_, "Model::loss");
  return loss(x.data(), label);
}

double Model::input_gradient(std::span<const float> x, std::uint32_t label, std::span<float> grad) const {
  check_input(x);
  check_label(label);
  if (grad.size() != x.size()) throw ValidationError("gradient buffer has wrong length");
  std::vector<double> pre;
  const auto z = forward(x, &pre);
  auto delta = softmax(z);
  const double loss_value = log_sum_exp(z) - z[label];
  delta[label] -= 1.0;

  std::vector<double> g(x.size(), 0.0);
  if (arch_ == Architecture::linear) {
    affine_transpose(w1_, delta, g);
  } else {
    std::vector<double> dh(hidden_, 0.0);
    affine_transpose(w2_, delta, dh);
    for (std::size_t j = 0; j < hidden_; ++j) {
      if (!(pre[j] > 0.0)) dh[j] = 0.0;
    }
    affine_transpose(w1_, dh, g);
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] = static_cast<float>(g[i]);
  return loss_value;
}

Tensor Model::input_gradient(const Image& x, std::uint32_t label) const {
  require_same_shape(x.shape(), dims_, "Model::input_gradient");
  Tensor g(dims_);
  input_gradient(x.data(), label, g.data());
  return g;
}

std::vector<double> Model::features(std::span<const float> x) const {
  check_input(x);
  if (arch_ == Architecture::linear) return forward(x, nullptr);
  std::vector<double> hidden;
  affine<float>(w1_, b1_, x, hidden);
  for (auto& h : hidden) h = h > 0.0 ? h : 0.0;
  return hidden;
}

double Model::feature_distance(std::span<const float> z, std::span<const double> target,
                               std::span<float> grad) const {
  check_input(z);
  if (target.size() != feature_size()) throw ValidationError("feature target has wrong length");
  if (grad.size() != z.size()) throw ValidationError("gradient buffer has wrong length");
  std::vector<double> pre;
  affine<float>(w1_, b1_, z, pre);
  std::vector<double> diff(pre.size());
  double dist = 0.0;
  for (std::size_t j = 0; j < pre.size(); ++j) {
    const double f = (arch_ == Architecture::mlp1 && !(pre[j] > 0.0)) ? 0.0 : pre[j];
    diff[j] = f - target[j];
    dist += diff[j] * diff[j];
    // d||f - t||^2 / d pre = 2 (f - t) * relu'(pre)
    diff[j] = (arch_ == Architecture::mlp1 && !(pre[j] > 0.0)) ? 0.0 : 2.0 * diff[j];
  }
  std::vector<double> g(z.size(), 0.0);
  affine_transpose(w1_, diff, g);
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] = static_cast<float>(g[i]);
  return dist;
}

std::vector<std::uint8_t> Model::encode() const {
  std::vector<std::uint8_t> out(kModelMagic, kModelMagic + 4);
  put_u32(out, arch_ == Architecture::linear ? 0u : 1u);
  put_u32(out, dims_.height);
  put_u32(out, dims_.width);
  put_u32(out, dims_.channels);
  put_u32(out, num_classes_);
  put_u32(out, hidden_);
  for (const auto* v : {&w1_, &b1_, &w2_, &b2_}) {
    for (float w : *v) put_f32(out, w);
  }
  return out;
}

Model Model::decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw ValidationError("not a BFM1 model checkpoint");
  }
  std::size_t pos = 4;
  const std::uint32_t tag = get_u32(bytes, pos);
  if (tag > 1) throw ValidationError(fmt::format("unknown architecture tag {}", tag));
  Shape dims;
  dims.height = get_u32(bytes, pos);
  dims.width = get_u32(bytes, pos);
  dims.channels = get_u32(bytes, pos);
  const std::uint32_t k = get_u32(bytes, pos);
  const std::uint32_t hidden = get_u32(bytes, pos);
  auto read_vec = [&](std::size_t n) {
    std::vector<float> v(n);
    for (auto& w : v) w = get_f32(bytes, pos);
    return v;
  };
  const std::size_t d = dims.size();
  Model m = [&] {
    if (tag == 0) {
      auto w = read_vec(std::size_t{k} * d);
      auto b = read_vec(k);
      return linear(dims, k, std::move(w), std::move(b));
    }
    auto w1 = read_vec(std::size_t{hidden} * d);
    auto b1 = read_vec(hidden);
    auto w2 = read_vec(std::size_t{k} * hidden);
    auto b2 = read_vec(k);
    return mlp1(dims, k, hidden, std::move(w1), std::move(b1), std::move(w2), std::move(b2));
  }();
  if (pos != bytes.size()) throw ValidationError("trailing bytes after BFM1 weights");
  return m;
}

void Model::save(const std::filesystem::path& path) const {
  write_file_bytes(path, encode());
}

Model Model::load(const std::filesystem::path& path) {
  try {
    return decode(read_file_bytes(path));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

double accuracy(const Model& model, const Dataset& data) {
  std::size_t correct = 0;
  for (const auto& s : data.samples()) {
    if (model.predict(s.image) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct Trainer {
  static TrainResult run(const Dataset& data, const TrainConfig& cfg) {
    if (cfg.epochs == 0 || cfg.batch_size == 0) {
      throw ValidationError("epochs and batch_size must be positive");
    }
    if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(cfg.l2_penalty >= 0.0)) throw ValidationError("l2_penalty must be >= 0");

    Model m = cfg.architecture == Architecture::linear
                  ? Model::zeros(Architecture::linear, data.shape(), data.num_classes())
                  : Model::random(Architecture::mlp1, data.shape(), data.num_classes(), cfg.hidden,
                                  cfg.seed);
    const std::size_t d = data.shape().size();
    const std::size_t k = data.num_classes();
    const bool mlp = m.arch_ == Architecture::mlp1;
    const std::size_t h = m.hidden_;

    std::vector<double> gw1(m.w1_.size()), gb1(m.b1_.size()), gw2(m.w2_.size()), gb2(m.b2_.size());
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(stage_seed(cfg.seed, "shuffle"));

    TrainResult result{m, 0.0, {}};
    Model& model = result.model;
    std::vector<double> pre, hidden, dh;

    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double epoch_loss = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        std::fill(gw1.begin(), gw1.end(), 0.0);
        std::fill(gb1.begin(), gb1.end(), 0.0);
        std::fill(gw2.begin(), gw2.end(), 0.0);
        std::fill(gb2.begin(), gb2.end(), 0.0);
        double batch_loss = 0.0;
        for (std::size_t i = start; i < end; ++i) {
          const auto& s = data[order[i]];
          const auto x = s.image.data();
          const auto z = model.forward(x, &pre);
          batch_loss += log_sum_exp(z) - z[s.label];
          auto delta = softmax(z);
          delta[s.label] -= 1.0;
          if (!mlp) {
            for (std::size_t r = 0; r < k; ++r) {
              gb1[r] += delta[r];
              double* row = gw1.data() + r * d;
              for (std::size_t c = 0; c < d; ++c) row[c] += delta[r] * x[c];
            }
            continue;
          }
          hidden.resize(h);
          for (std::size_t j = 0; j < h; ++j) hidden[j] = pre[j] > 0.0 ? pre[j] : 0.0;
          dh.assign(h, 0.0);
          for (std::size_t r = 0; r < k; ++r) {
            gb2[r] += delta[r];
            double* row = gw2.data() + r * h;
            const float* wrow = model.w2_.data() + r * h;
            for (std::size_t j = 0; j < h; ++j) {
              row[j] += delta[r] * hidden[j];
              dh[j] += delta[r] * wrow[j];
            }
          }
          for (std::size_t j = 0; j < h; ++j) {
            if (!(pre[j] > 0.0)) continue;
            gb1[j] += dh[j];
            double* row = gw1.data() + j * d;
            for (std::size_t c = 0; c < d; ++c) row[c] += dh[j] * x[c];
          }
        }
        const double n = static_cast<double>(end - start);
        batch_loss /= n;
        if (!std::isfinite(batch_loss)) {
          throw RuntimeError(fmt::format("training diverged at epoch {} (loss {})", epoch, batch_loss));
        }
        epoch_loss += batch_loss;
        ++batches;
        const double lr = cfg.learning_rate;
        auto step = [&](std::vector<float>& w, const std::vector<double>& g, bool decay) {
          for (std::size_t i = 0; i < w.size(); ++i) {
            double grad = g[i] / n;
            if (decay) grad += cfg.l2_penalty * w[i];
            w[i] = static_cast<float>(w[i] - lr * grad);
          }
        };
        step(model.w1_, gw1, true);
        step(model.b1_, gb1, false);
        if (mlp) {
          step(model.w2_, gw2, true);
          step(model.b2_, gb2, false);
        }
      }
      result.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    }
    for (const auto* v : {&model.w1_, &model.b1_, &model.w2_, &model.b2_}) {
      for (float w : *v) {
        if (!std::isfinite(w)) throw RuntimeError("training produced non-finite weights");
      }
    }
    result.train_accuracy = accuracy(model, data);
    return result;
  }
};

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
  return Trainer::run(data, cfg);
}

} // namespace bf
