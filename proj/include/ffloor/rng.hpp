#pragma once

#include <cstdint>

namespace ffloor {

// SplitMix64 finalizer. Part of the model file contract: per-tree streams are
// seeded with stream_seed(master, tree) and must not change between versions.
std::uint64_t mix64(std::uint64_t z);

// Seed for an independent stream identified by `index` under `master`.
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index);

// Counter-based SplitMix64 generator. Distributions are implemented here
// rather than with <random> so that draws are identical across standard
// libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ffloor
