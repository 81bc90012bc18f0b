#include "imblab/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imblab/errors.hpp"
#include "imblab/log.hpp"

namespace imblab {

void SamplerConfig::validate() const {
  switch (strategy) {
    case Strategy::none:
      return;
    case Strategy::biased:
      if (batch_size < 2) throw ConfigError("SamplerConfig: biased batch_size must be >= 2");
      if (!(fg_fraction > 0.0 && fg_fraction < 1.0))
        throw ConfigError("SamplerConfig: fg_fraction must be in (0,1)");
      return;
    case Strategy::ohem:
      if (top_k < 1) throw ConfigError("SamplerConfig: ohem top_k must be >= 1");
      return;
  }
}

namespace {

// First `take` elements of a seeded partial Fisher-Yates over `pool`.
std::vector<int64_t> draw_without_replacement(std::vector<int64_t>& pool, int64_t take,
                                              Rng& rng) {
  take = std::min<int64_t>(take, static_cast<int64_t>(pool.size()));
  for (int64_t i = 0; i < take; ++i) {
    const auto j = rng.uniform_int(i, static_cast<int64_t>(pool.size()) - 1);
    std::swap(pool[i], pool[j]);
  }
  return std::vector<int64_t>(pool.begin(), pool.begin() + take);
}

}  // namespace

std::vector<int64_t> biased_sample(const MatchResult& match, int batch_size,
                                   double fg_fraction, Rng& rng) {
  if (batch_size < 2) throw ConfigError("biased_sample: batch_size must be >= 2");
  if (!(fg_fraction > 0.0 && fg_fraction < 1.0))
    throw ConfigError("biased_sample: fg_fraction must be in (0,1)");
  std::vector<int64_t> fg_pool, bg_pool;
  for (size_t i = 0; i < match.labels.size(); ++i) {
    if (match.labels[i] >= 1) fg_pool.push_back(static_cast<int64_t>(i));
    else if (match.labels[i] == 0) bg_pool.push_back(static_cast<int64_t>(i));
  }
  if (fg_pool.empty() && bg_pool.empty())
    throw DataError("biased_sample: no non-ignore anchors to sample from");
  if (bg_pool.empty())
    log_warn("biased_sample: zero background anchors; emitting all-foreground subset");

  const auto fg_target = static_cast<int64_t>(std::floor(fg_fraction * batch_size));
  int64_t n_fg = std::min<int64_t>(fg_target, static_cast<int64_t>(fg_pool.size()));
  int64_t n_bg = std::min<int64_t>(batch_size - n_fg, static_cast<int64_t>(bg_pool.size()));
  if (n_fg + n_bg < batch_size)  // background deficit: top up from foreground
    n_fg = std::min<int64_t>(batch_size - n_bg, static_cast<int64_t>(fg_pool.size()));

  auto selected = draw_without_replacement(fg_pool, n_fg, rng);
  auto bg = draw_without_replacement(bg_pool, n_bg, rng);
  selected.insert(selected.end(), bg.begin(), bg.end());
  std::sort(selected.begin(), selected.end());
  return selected;
}

std::vector<int64_t> ohem_select(std::span<const double> losses, int k) {
  if (k < 1) throw ConfigError("ohem_select: k must be >= 1");
  const auto n = static_cast<int64_t>(losses.size());
  if (k > n) {
    log_warn("ohem_select: k=" + std::to_string(k) + " exceeds " + std::to_string(n) +
             " candidates; keeping all");
    k = static_cast<int>(n);
  }
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (losses[a] != losses[b]) return losses[a] > losses[b];
    return a < b;  // ties by lowest index
  });
  order.resize(static_cast<size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace imblab
