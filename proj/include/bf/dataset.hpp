#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bf/image.hpp"

namespace bf {

enum class Provenance { clean, poisoned, recovered };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct LabeledSample {
  Image image;
  std::uint32_t label = 0;
  Provenance provenance = Provenance::clean;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

// Ordered, non-empty collection of samples sharing one image shape.
class Dataset {
public:
  Dataset(std::string name, std::uint32_t num_classes, std::vector<LabeledSample> samples);

  const std::string& name() const { return name_; }
  std::uint32_t num_classes() const { return num_classes_; }
  const Shape& shape() const { return samples_.front().image.shape(); }
  std::size_t size() const { return samples_.size(); }
  const std::vector<LabeledSample>& samples() const { return samples_; }
  const LabeledSample& operator[](std::size_t i) const { return samples_[i]; }

  // Indices of samples whose label is `label`, in dataset order.
  std::vector<std::size_t> indices_of_class(std::uint32_t label) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

private:
  std::string name_;
  std::uint32_t num_classes_;
  std::vector<LabeledSample> samples_;
};

} // namespace bf
