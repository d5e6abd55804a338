#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bf/dataset.hpp"

namespace bf {

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::uint32_t kCifarSide = 32;

// CIFAR-10 binary batch: N records of <1 label byte><1024 R><1024 G><1024 B>,
// each plane row-major. Pixels are scaled by 1/255 into channel-last layout.
// Throws ValidationError on an empty/truncated file or a label byte > 9.
Dataset decode_cifar10_batch(const std::vector<std::uint8_t>& bytes, std::string name = "cifar10");
Dataset load_cifar10_batch(const std::filesystem::path& path);

} // namespace bf
