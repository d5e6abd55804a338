#pragma once

#include <cstdint>
#include <string_view>

namespace bf {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent seed for a named pipeline stage from the root seed.
constexpr std::uint64_t stage_seed(std::uint64_t root, std::string_view stage) {
  return splitmix64(root ^ fnv1a64(stage));
}

// Counter-based uniform draw in [0,1): a pure function of (seed, counter),
// so results do not depend on evaluation order or thread count.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(splitmix64(seed) ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

} // namespace bf
