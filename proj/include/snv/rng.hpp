#pragma once

#include <cstdint>
#include <random>

namespace snv {

/// SplitMix64 finalizer; mixes (seed, index) into an independent stream seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

}  // namespace snv
