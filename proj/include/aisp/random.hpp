#pragma once

#include <cstdint>
#include <random>

namespace aisp {

using Rng = std::mt19937_64;

// Uniform integer in [lo, hi). Requires lo < hi.
inline std::int64_t rand_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi - 1)(rng);
}

// Uniform real in [0, 1).
inline double rand_unit(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// Independent stream for (seed, a, b), e.g. (run seed, iteration, sample slot).
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

}  // namespace aisp
