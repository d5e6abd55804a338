#include "bf/synthetic.hpp"

#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "bf/error.hpp"
#include "bf/rng.hpp"

namespace bf {

std::vector<Image> class_prototypes(std::uint32_t num_classes, Shape dims, std::uint64_t seed) {
  std::mt19937_64 rng(stage_seed(seed, "prototypes"));
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  std::vector<Image> protos;
  protos.reserve(num_classes);
  for (std::uint32_t k = 0; k < num_classes; ++k) {
    std::vector<float> data(dims.size());
    for (auto& v : data) v = uni(rng);
    protos.push_back(Image::clipped(dims, std::move(data)));
  }
  return protos;
}

Dataset gen_synthetic_identities(const SyntheticSpec& spec) {
  return gen_synthetic_identities(spec, spec.seed);
}

Dataset gen_synthetic_identities(const SyntheticSpec& spec, std::uint64_t sample_seed) {
  if (spec.num_classes == 0 || spec.per_class == 0) {
    throw ValidationError("synthetic dataset needs at least one class and one sample per class");
  }
  if (!(spec.noise_sigma >= 0.0)) {
    throw ValidationError(fmt::format("noise sigma must be >= 0, got {}", spec.noise_sigma));
  }
  if (spec.dims.size() == 0) throw ValidationError("synthetic image dims must be non-zero");

  const auto protos = class_prototypes(spec.num_classes, spec.dims, spec.seed);
  std::mt19937_64 rng(stage_seed(sample_seed, "samples"));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<LabeledSample> samples;
  samples.reserve(std::size_t{spec.num_classes} * spec.per_class);
  for (std::uint32_t k = 0; k < spec.num_classes; ++k) {
    for (std::uint32_t i = 0; i < spec.per_class; ++i) {
      std::vector<float> data(protos[k].data().begin(), protos[k].data().end());
      if (spec.noise_sigma > 0.0) {
        for (auto& v : data) v = static_cast<float>(v + spec.noise_sigma * noise(rng));
      }
      samples.push_back({Image::clipped(spec.dims, std::move(data)), k, Provenance::clean});
    }
  }
  return Dataset("synthetic", spec.num_classes, std::move(samples));
}

} // namespace bf
