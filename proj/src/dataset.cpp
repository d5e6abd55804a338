#include "bf/dataset.hpp"

#include <fmt/format.h>

#include "bf/error.hpp"

namespace bf {

std::string_view to_string(Provenance p) {
  switch (p) {
  case Provenance::clean:
    return "clean";
  case Provenance::poisoned:
    return "poisoned";
  case Provenance::recovered:
    return "recovered";
  }
  return "clean";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "clean") return Provenance::clean;
  if (s == "poisoned") return Provenance::poisoned;
  if (s == "recovered") return Provenance::recovered;
  throw ValidationError(fmt::format("unknown provenance '{}'", s));
}

Dataset::Dataset(std::string name, std::uint32_t num_classes, std::vector<LabeledSample> samples)
    : name_(std::move(name)), num_classes_(num_classes), samples_(std::move(samples)) {
  if (samples_.empty()) {
    throw ValidationError(fmt::format("dataset '{}' is empty", name_));
  }
  if (num_classes_ == 0) {
    throw ValidationError(fmt::format("dataset '{}' has zero classes", name_));
  }
  const Shape& s0 = samples_.front().image.shape();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!(samples_[i].image.shape() == s0)) {
      throw ValidationError(fmt::format("dataset '{}': sample {} has shape {}, expected {}", name_,
                                        i, samples_[i].image.shape().str(), s0.str()));
    }
    if (samples_[i].label >= num_classes_) {
      throw ValidationError(fmt::format("dataset '{}': sample {} label {} >= num_classes {}", name_,
                                        i, samples_[i].label, num_classes_));
    }
  }
}

std::vector<std::size_t> Dataset::indices_of_class(std::uint32_t label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (samples_[i].label == label) out.push_back(i);
  }
  return out;
}

} // namespace bf
