#include <benchmark/benchmark.h>

#include "imblab/losses.hpp"
#include "imblab/rng.hpp"

using namespace imblab;

namespace {

ClsBatch make_batch(int64_t n, int64_t c, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> logits(static_cast<size_t>(n * c));
  for (auto& v : logits) v = rng.uniform(-6.0, 2.0);
  std::vector<int> labels(static_cast<size_t>(n), 0);
  for (int64_t i = 0; i < n; ++i)
    if (rng.uniform() < 0.01) labels[i] = 1 + static_cast<int>(rng.uniform_int(0, c - 1));
  labels[0] = 1;
  return ClsBatch::make(sigmoid(Value::param({n, c}, logits)), labels);
}

void bm_ce_loss_backward(benchmark::State& state) {
  for (auto _ : state) {
    auto batch = make_batch(3072, 3, 7);
    backward(ce_loss(batch));
    benchmark::DoNotOptimize(batch.probs.data().data());
  }
}
BENCHMARK(bm_ce_loss_backward);

void bm_focal_loss_backward(benchmark::State& state) {
  for (auto _ : state) {
    auto batch = make_batch(3072, 3, 7);
    backward(focal_loss(batch, 0.25, 2.0));
    benchmark::DoNotOptimize(batch.probs.data().data());
  }
}
BENCHMARK(bm_focal_loss_backward);

void bm_ghmc_loss_backward(benchmark::State& state) {
  GhmcParams params;
  GhmcState state_ghm;
  for (auto _ : state) {
    auto batch = make_batch(3072, 3, 7);
    backward(ghmc_loss(batch, params, state_ghm, {}));
    benchmark::DoNotOptimize(batch.probs.data().data());
  }
}
BENCHMARK(bm_ghmc_loss_backward);

}  // namespace
