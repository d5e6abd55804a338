#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "bf/dataset.hpp"
#include "bf/image.hpp"

namespace bf {

enum class Architecture { linear, mlp1 };

std::string_view to_string(Architecture a);
Architecture architecture_from_string(std::string_view s);

// Small differentiable classifier. `linear` computes logits = W x + b;
// `mlp1` computes logits = W2 relu(W1 x + b1) + b2. Weights are float32,
// every forward/backward pass accumulates in double. Immutable after
// construction; all queries are safe to call concurrently.
class Model {
public:
  static Model zeros(Architecture arch, Shape dims, std::uint32_t num_classes,
                     std::uint32_t hidden = 64);
  static Model random(Architecture arch, Shape dims, std::uint32_t num_classes,
                      std::uint32_t hidden, std::uint64_t seed);
  // `weights` is K x d row-major, `bias` has K entries.
  static Model linear(Shape dims, std::uint32_t num_classes, std::vector<float> weights,
                      std::vector<float> bias);
  static Model mlp1(Shape dims, std::uint32_t num_classes, std::uint32_t hidden,
                    std::vector<float> w1, std::vector<float> b1, std::vector<float> w2,
                    std::vector<float> b2);

  Architecture architecture() const { return arch_; }
  const Shape& input_shape() const { return dims_; }
  std::uint32_t num_classes() const { return num_classes_; }
  std::uint32_t hidden_width() const { return hidden_; }
  std::size_t input_size() const { return dims_.size(); }
  // Width of the penultimate representation (hidden layer, or logits).
  std::size_t feature_size() const;

  // Layer parameters. For `linear`, w1/b1 hold W/b and w2/b2 are empty.
  std::span<const float> w1() const { return w1_; }
  std::span<const float> b1() const { return b1_; }
  std::span<const float> w2() const { return w2_; }
  std::span<const float> b2() const { return b2_; }

  std::vector<double> logits(std::span<const float> x) const;
  std::vector<double> logits(const Image& x) const;
  std::vector<double> probabilities(std::span<const float> x) const;

  // Argmax of the logits, ties broken toward the lowest class index.
  std::uint32_t predict(std::span<const float> x) const;
  std::uint32_t predict(const Image& x) const;

  // Cross-entropy of softmax(logits) against `label`, log-sum-exp stabilized.
  double loss(std::span<const float> x, std::uint32_t label) const;
  double loss(const Image& x, std::uint32_t label) const;

  // Exact d loss / d x by backpropagation. Writes into `grad` (same length
  // as x) and returns the loss. ReLU'(0) is taken as 0.
  double input_gradient(std::span<const float> x, std::uint32_t label, std::span<float> grad) const;
  Tensor input_gradient(const Image& x, std::uint32_t label) const;

  // Penultimate features: hidden activations for mlp1, logits for linear.
  std::vector<double> features(std::span<const float> x) const;
  // Returns ||features(z) - target||^2 and writes its gradient w.r.t. z.
  double feature_distance(std::span<const float> z, std::span<const double> target,
                          std::span<float> grad) const;

  std::vector<std::uint8_t> encode() const;
  static Model decode(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  friend bool operator==(const Model&, const Model&) = default;

private:
  Model() = default;
  void check_input(std::span<const float> x) const;
  void check_label(std::uint32_t label) const;
  // Forward pass; fills hidden pre-activations when the model is mlp1.
  std::vector<double> forward(std::span<const float> x, std::vector<double>* pre) const;
  void validate() const;

  friend struct Trainer;

  Architecture arch_ = Architecture::linear;
  Shape dims_;
  std::uint32_t num_classes_ = 0;
  std::uint32_t hidden_ = 0;
  std::vector<float> w1_, b1_, w2_, b2_;
};

struct TrainConfig {
  Architecture architecture = Architecture::mlp1;
  std::uint32_t hidden = 64;
  std::uint32_t epochs = 60;
  double learning_rate = 0.1;
  std::uint32_t batch_size = 16;
  std::uint64_t seed = 0;
  double l2_penalty = 0.0;
};

struct TrainResult {
  Model model;
  double train_accuracy = 0.0;
  // Mean minibatch loss per epoch.
  std::vector<double> epoch_losses;
};

// Plain minibatch SGD on mean cross-entropy (+ l2/2 ||W||^2 on weights), with
// the shuffling schedule fixed by cfg.seed. Throws RuntimeError on divergence.
TrainResult train(const Dataset& data, const TrainConfig& cfg);

double accuracy(const Model& model, const Dataset& data);

// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

} // namespace bf
