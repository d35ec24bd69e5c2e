#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "imm/util.hpp"

namespace imm {

using Rng = std::mt19937_64;

// splitmix64 step; used to derive independent stream seeds from one master
// seed so that chains / birds / replicates never share state.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

inline double uniform01(Rng& rng) {
  // 53-bit mantissa in (0,1); never returns exactly 0 or 1.
  return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// Box-Muller pair. One log + one sqrt + sincos per two normals; this is the
// hot path of the Euler-Maruyama oracle and the Monte Carlo rectangle oracle.
struct NormalPair {
  double z1;
  double z2;
};

inline NormalPair normal_pair(Rng& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = kTwoPi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

inline double normal(Rng& rng) {
  return normal_pair(rng).z1;
}

}  // namespace imm
