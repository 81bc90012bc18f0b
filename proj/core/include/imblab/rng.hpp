#pragma once

#include <cstdint>

namespace imblab {

// Hand-rolled xoshiro256++ so random streams are bit-identical across
// platforms and standard-library versions. Every stochastic component takes
// an explicit Rng (or a seed) -- there is no global generator.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi], inclusive. Unbiased via rejection.
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Standard Box-Muller; caches the spare deviate.
  double normal(double mean, double stddev);

 private:
  uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable per-stream seed derivation (splitmix64 mixing). Used to give each
// scene / parameter / subsystem its own independent stream from one base
// seed, so results do not depend on generation order.
uint64_t derive_seed(uint64_t base, uint64_t stream);

}  // namespace imblab
