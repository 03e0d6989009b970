#pragma once

// Sub-stream seeds derived from a master seed and a path such as
// "sweep/3/rep/7".

#include <cstdint>
#include <string_view>

namespace mecache {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Folds every path byte into the state with one mixing round per byte, then
// mixes in the path length.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view path) {
  std::uint64_t h = mix64(master + 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : path) {
    h = mix64(h ^ (0x9E3779B97F4A7C15ULL * (std::uint64_t{c} + 1)));
  }
  return mix64(h ^ path.size());
}

}  // namespace mecache
