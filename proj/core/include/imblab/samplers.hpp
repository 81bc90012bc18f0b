#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "imblab/anchors.hpp"
#include "imblab/rng.hpp"

namespace imblab {

struct SamplerConfig {
  enum class Strategy { none, biased, ohem };
  Strategy strategy = Strategy::none;
  int batch_size = 256;      // biased: anchors kept per scene
  double fg_fraction = 0.5;  // biased: target foreground share
  int top_k = 128;           // ohem: hardest anchors kept per scene
  uint64_t seed = 0;         // 0 derives a stream from the experiment seed

  void validate() const;
};

// Mini-batch biased sampling: up to floor(fg_fraction * batch_size)
// foreground anchors drawn uniformly without replacement, remainder filled
// from background; a short pool on either side is topped up from the other.
// Ignore-labeled anchors are never selected. Returns ascending anchor ids.
std::vector<int64_t> biased_sample(const MatchResult& match, int batch_size,
                                   double fg_fraction, Rng& rng);

// OHEM: indices (into `losses`) of the k largest values, ties broken by
// lowest index. Caller supplies per-anchor losses detached from the gradient
// graph. Returns ascending indices; k above the candidate count keeps all
// with a logged warning.
std::vector<int64_t> ohem_select(std::span<const double> losses, int k);

}  // namespace imblab
