#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace hjrobust {

// All simulation randomness flows from std::mt19937_64 engines seeded by
// derive_seed(); normals come from boost's ziggurat sampler. Identical
// (master seed, stream indices) therefore give bit-identical draws on any
// platform.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based child seed: independent of evaluation order and thread count.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(master);
  for (auto p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

}  // namespace hjrobust
