#include "bf/cifar.hpp"

#include <fmt/format.h>

#include "bf/error.hpp"
#include "bf/tensor_io.hpp"

namespace bf {

Dataset decode_cifar10_batch(const std::vector<std::uint8_t>& bytes, std::string name) {
  if (bytes.empty()) throw ValidationError("CIFAR-10 batch is empty");
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw ValidationError(fmt::format("CIFAR-10 batch truncated: {} bytes is not a multiple of {}",
                                      bytes.size(), kCifarRecordBytes));
  }
  constexpr std::size_t plane = std::size_t{kCifarSide} * kCifarSide;
  const Shape shape{kCifarSide, kCifarSide, 3};
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  std::vector<LabeledSample> samples;
  samples.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw ValidationError(fmt::format("CIFAR-10 record {} has label byte {} > 9", r, rec[0]));
    }
    std::vector<float> data(shape.size());
    for (std::size_t ch = 0; ch < 3; ++ch) {
      for (std::size_t p = 0; p < plane; ++p) {
        data[p * 3 + ch] = static_cast<float>(rec[1 + ch * plane + p] / 255.0);
      }
    }
    samples.push_back({Image(shape, std::move(data)), rec[0], Provenance::clean});
  }
  return Dataset(std::move(name), 10, std::move(samples));
}

Dataset load_cifar10_batch(const std::filesystem::path& path) {
  return decode_cifar10_batch(read_file_bytes(path), path.stem().string());
}

} // namespace bf
