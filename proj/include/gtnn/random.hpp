#pragma once

#include <cstdint>
#include <random>

namespace gtnn {

using Rng = std::mt19937_64;

/// Independent, reproducible generator for (seed, stream, tag). Work split by
/// stream (trial, block, query ...) draws the same numbers however it is scheduled.
inline Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint32_t tag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), tag};
  return Rng(seq);
}

/// Uniform draw in [0, 1).
inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace gtnn
