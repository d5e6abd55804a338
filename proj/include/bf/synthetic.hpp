#pragma once

#include <cstdint>
#include <vector>

#include "bf/dataset.hpp"

namespace bf {

struct SyntheticSpec {
  std::uint32_t num_classes = 3;
  std::uint32_t per_class = 100;
  Shape dims{8, 8, 3};
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
};

// One uniform-random prototype image per class, drawn from `seed` alone.
std::vector<Image> class_prototypes(std::uint32_t num_classes, Shape dims, std::uint64_t seed);

// Each sample is its class prototype plus i.i.d. Gaussian noise, clipped to
// [0,1]. Samples are ordered class-major. `sample_seed` selects the noise
// stream so that held-out sets can share prototypes with the training set;
// it defaults to `seed`.
Dataset gen_synthetic_identities(const SyntheticSpec& spec);
Dataset gen_synthetic_identities(const SyntheticSpec& spec, std::uint64_t sample_seed);

} // namespace bf
