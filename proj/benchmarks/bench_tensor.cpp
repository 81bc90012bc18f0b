#include <benchmark/benchmark.h>

#include "imblab/rng.hpp"
#include "imblab/tensor.hpp"

using namespace imblab;

namespace {

std::vector<double> random_vec(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void bm_conv2d_forward(benchmark::State& state) {
  const int stride = static_cast<int>(state.range(0));
  Value in = Value::constant({8, 32, 32}, random_vec(8 * 32 * 32, 1));
  Value w = Value::constant({16, 8, 3, 3}, random_vec(16 * 8 * 9, 2));
  Value b = Value::constant({16}, random_vec(16, 3));
  for (auto _ : state) {
    auto out = conv2d(in, w, b, stride, 1);
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(bm_conv2d_forward)->Arg(1)->Arg(2);

void bm_conv2d_backward(benchmark::State& state) {
  Value in = Value::param({8, 32, 32}, random_vec(8 * 32 * 32, 1));
  Value w = Value::param({16, 8, 3, 3}, random_vec(16 * 8 * 9, 2));
  Value b = Value::param({16}, random_vec(16, 3));
  for (auto _ : state) {
    Value root = sum(conv2d(in, w, b, 1, 1));
    backward(root);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(bm_conv2d_backward);

void bm_backward_elementwise_chain(benchmark::State& state) {
  Value x = Value::param({1024, 3}, random_vec(1024 * 3, 4));
  for (auto _ : state) {
    Value root = sum(log_guarded(sigmoid(mul(x, x))));
    backward(root);
    benchmark::DoNotOptimize(x.grad().data());
  }
}
BENCHMARK(bm_backward_elementwise_chain);

}  // namespace
