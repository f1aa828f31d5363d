#pragma once

#include <cstdint>
#include <random>

namespace smt {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; derives independent per-shard seeds from a base seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for shard `index` of a generator seeded with `base`.
constexpr std::uint64_t shard_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base ^ splitmix64(index + 1));
}

}  // namespace smt
