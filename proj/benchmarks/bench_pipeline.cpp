#include <benchmark/benchmark.h>

#include "imblab/evaluator.hpp"
#include "imblab/experiment.hpp"
#include "imblab/trainer.hpp"

using namespace imblab;

namespace {

void bm_match_scene(benchmark::State& state) {
  const auto cfg = imb_std_preset();
  const auto scenes = generate([&] {
    auto spec = cfg.dataset;
    spec.num_scenes = 4;
    return spec;
  }());
  const auto anchors = build_anchors(64, 64, cfg.anchors);
  size_t i = 0;
  for (auto _ : state) {
    const auto m = match(anchors, scenes[i++ % scenes.size()], 0.5, 0.4);
    benchmark::DoNotOptimize(m.foreground);
  }
}
BENCHMARK(bm_match_scene);

void bm_train_iteration(benchmark::State& state) {
  auto cfg = imb_std_preset();
  cfg.dataset.num_scenes = 8;
  resolve_experiment(cfg);
  const auto scenes = generate(cfg.dataset);
  int64_t iterations = 0;
  for (auto _ : state) {
    state.PauseTiming();
    cfg.schedule.iterations = 4;
    state.ResumeTiming();
    const auto out = train(scenes, cfg.anchors, cfg.detector, cfg.loss, cfg.sampler,
                           cfg.schedule, 1);
    iterations += static_cast<int64_t>(out.record.rows.size());
    benchmark::DoNotOptimize(out.record.rows.size());
  }
  state.SetItemsProcessed(iterations);
}
BENCHMARK(bm_train_iteration)->Unit(benchmark::kMillisecond);

void bm_nms_dense(benchmark::State& state) {
  Rng rng(3);
  std::vector<Detection> dets;
  for (int i = 0; i < 1024; ++i) {
    Detection d;
    d.scene_id = 0;
    d.label = 1 + static_cast<int>(rng.uniform_int(0, 2));
    d.score = rng.uniform(0.0, 1.0);
    const double x = rng.uniform(0, 56), y = rng.uniform(0, 56);
    d.box = {x, y, x + rng.uniform(4, 12), y + rng.uniform(4, 12)};
    d.anchor = i;
    dets.push_back(d);
  }
  for (auto _ : state) {
    auto kept = nms(dets, 0.5);
    benchmark::DoNotOptimize(kept.size());
  }
}
BENCHMARK(bm_nms_dense);

}  // namespace
