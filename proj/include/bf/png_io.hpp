#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bf/image.hpp"

namespace bf {

// 8-bit PNG (gray for 1 channel, RGB for 3). Values are scaled by 255 and
// rounded half-up on write, divided by 255 on read.
std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

std::uint8_t to_byte(float v);

// Single-channel map of max-over-channels |a-b|, normalized so the largest
// difference in the image maps to 1. All-zero when a == b.
Image perturbation_heatmap(const Image& a, const Image& b);

} // namespace bf
