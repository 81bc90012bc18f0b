#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "imblab/errors.hpp"
#include "imblab/io.hpp"
#include "imblab/trainer.hpp"

using namespace imblab;

namespace {

struct TinySetup {
  DatasetSpec dataset;
  AnchorConfig anchors;
  DetectorConfig detector;
  LossConfig loss;
  SamplerConfig sampler;
  Schedule schedule;
};

TinySetup tiny_setup() {
  TinySetup s;
  s.dataset.num_scenes = 12;
  s.dataset.height = 16;
  s.dataset.width = 16;
  s.dataset.num_classes = 2;
  s.dataset.objects_per_scene = {1, 2};
  s.dataset.object_size = {5, 7};
  s.dataset.seed = 77;

  s.anchors.strides = {4};
  s.anchors.scales = {1.5};
  s.anchors.aspect_ratios = {1.0};

  s.detector.channels = {4, 8};
  s.detector.conv_strides = {2, 2};
  s.detector.num_classes = 2;
  s.detector.anchors_per_location = 1;
  s.detector.input_height = 16;
  s.detector.input_width = 16;

  s.schedule.iterations = 12;
  s.schedule.learning_rate = 0.01;
  s.schedule.batch_scenes = 2;
  return s;
}

}  // namespace

TEST_CASE("guided CE with optimal bias completes with the exact weight identity") {
  auto s = tiny_setup();
  s.loss.guided = true;
  s.detector.init_policy = {InitPolicyKind::optimal_bias, 0.0};
  const auto scenes = generate(s.dataset);
  const auto out =
      train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, /*seed=*/3);
  CHECK(out.record.status == RunStatus::completed);
  CHECK(out.record.rows.size() == 12);
  for (const auto& row : out.record.rows) {
    if (row.skipped) continue;
    // value(w * L_cls) equals stage_factor * value(L_reg) exactly
    CHECK(row.cls_weighted == row.reg);
    // logged w equals value(L_reg)/value(L_cls) * stage_factor to 1e-12
    CHECK(std::fabs(row.effective_w - row.reg / row.cls_raw) <= 1e-12);
  }
  CHECK(out.store.iteration == 12);
}

TEST_CASE("training is deterministic: same config and seed, bit-identical records") {
  auto s = tiny_setup();
  s.loss.guided = true;
  s.detector.init_policy = {InitPolicyKind::optimal_bias, 0.0};
  const auto scenes = generate(s.dataset);
  const auto a = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, 5);
  const auto b = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, 5);
  CHECK(run_record_csv(a.record) == run_record_csv(b.record));
  for (const auto& [name, value] : a.store.params)
    CHECK(value.data() == b.store.at(name).data());
  const auto c = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, 6);
  CHECK(run_record_csv(c.record) != run_record_csv(a.record));
}

TEST_CASE("Eq-style combined update: step equals lr * (g_reg + w * g_cls)") {
  auto s = tiny_setup();
  s.loss.guided = true;
  s.detector.init_policy = {InitPolicyKind::optimal_bias, 0.0};
  s.schedule.iterations = 1;
  const auto scenes = generate(s.dataset);
  const uint64_t seed = 9;

  const auto out = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, seed);
  REQUIRE(out.record.rows.size() == 1);
  REQUIRE_FALSE(out.record.rows[0].skipped);
  const double w = out.record.rows[0].effective_w;
  const double lr = out.record.rows[0].learning_rate;

  // Rebuild the exact same initial state and first batch.
  const AnchorSet anchor_set = build_anchors(16, 16, s.anchors);
  std::vector<MatchResult> matches;
  for (const auto& scene : scenes)
    matches.push_back(match(anchor_set, scene, s.anchors.fg_thresh, s.anchors.bg_thresh));
  auto store0 =
      init_detector(s.detector, out.stats, seed, s.schedule.learning_rate);
  Rng batch_rng(derive_seed(seed, kBatchRngStream));
  const auto batch_ids =
      pick_batch(batch_rng, static_cast<int64_t>(scenes.size()), s.schedule.batch_scenes);

  Rng sampler_rng(derive_seed(seed, kSamplerRngStream));
  GhmcState ghm;
  // two separate backward passes through the same graph structure
  auto graph_reg = build_batch_losses(store0, s.detector, scenes, matches, batch_ids, s.loss,
                                      s.sampler, sampler_rng, ghm);
  backward(graph_reg.reg);
  std::map<std::string, std::vector<double>> g_reg;
  for (const auto& [name, value] : store0.params)
    g_reg[name] = value.has_grad() ? value.grad()
                                   : std::vector<double>(value.data().size(), 0.0);

  // A second identically-initialized store keeps the cls-pass gradients free
  // of stale reg-pass storage (theta values are identical by construction).
  auto store0b =
      init_detector(s.detector, out.stats, seed, s.schedule.learning_rate);
  Rng sampler_rng2(derive_seed(seed, kSamplerRngStream));
  GhmcState ghm2;
  auto graph_cls = build_batch_losses(store0b, s.detector, scenes, matches, batch_ids, s.loss,
                                      s.sampler, sampler_rng2, ghm2);
  backward(graph_cls.cls_raw);

  for (const auto& [name, value] : store0.params) {
    const auto& theta0 = value.data();
    const auto& theta1 = out.store.at(name).data();
    const auto& cls_param = store0b.at(name);
    const auto g_cls = cls_param.has_grad() ? cls_param.grad()
                                            : std::vector<double>(theta0.size(), 0.0);
    for (size_t i = 0; i < theta0.size(); ++i) {
      const double expected = theta0[i] - lr * (g_reg[name][i] + w * g_cls[i]);
      CHECK(std::fabs(theta1[i] - expected) <=
            1e-9 * std::max({1.0, std::fabs(theta1[i]), std::fabs(expected)}));
    }
  }
}

TEST_CASE("divergence is terminal, recorded, and does not escape") {
  auto s = tiny_setup();
  s.loss.fixed_w = 1.0;  // plain CE at zero bias
  s.schedule.learning_rate = 1e6;
  s.schedule.iterations = 50;
  const auto scenes = generate(s.dataset);
  const auto out = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, 1);
  CHECK(out.record.status == RunStatus::diverged);
  CHECK(out.record.diverged_at >= 0);
  CHECK(out.record.diverged_at < 50);
  CHECK_FALSE(out.record.divergence_reason.empty());
  CHECK(static_cast<int64_t>(out.record.rows.size()) == out.record.diverged_at);
}

TEST_CASE("batches without foreground are skipped but still counted") {
  auto s = tiny_setup();
  s.loss.guided = true;
  // hand-build scenes: one with an object, three pure background
  auto scenes = generate(s.dataset);
  scenes.resize(4);
  for (int i = 1; i < 4; ++i) {
    scenes[i].gt_boxes.clear();
    scenes[i].gt_labels.clear();
    scenes[i].scene_id = i;
  }
  s.schedule.batch_scenes = 1;
  s.schedule.iterations = 10;
  const auto out = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, 2);
  CHECK(out.record.status == RunStatus::completed);
  int skipped = 0;
  for (const auto& row : out.record.rows) skipped += row.skipped ? 1 : 0;
  CHECK(skipped > 0);
  CHECK(skipped < 10);
  CHECK(out.store.iteration == 10);  // skips still advance t
}

TEST_CASE("init check is written for CE runs and is nearly exact in batch form") {
  auto s = tiny_setup();
  s.loss.guided = true;
  s.detector.init_policy = {InitPolicyKind::optimal_bias, 0.0};
  s.schedule.iterations = 1;
  const auto scenes = generate(s.dataset);
  const auto out = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, 4);
  REQUIRE(out.record.init_check.has_value());
  const auto& check = *out.record.init_check;
  // with zeroed final weights the measurement is the closed form at the
  // batch's own ratio, up to rounding
  CHECK(check.rel_err_batch < 1e-9);
  CHECK(check.measured > 0.0);
  CHECK(out.record.initial_pi ==
        doctest::Approx(out.stats.nf_total /
                        (static_cast<double>(out.stats.n_total) * 2))
            .epsilon(1e-12));
}

TEST_CASE("samplers run inside training: biased and ohem variants complete") {
  auto s = tiny_setup();
  s.loss.guided = true;
  s.detector.init_policy = {InitPolicyKind::optimal_bias, 0.0};
  const auto scenes = generate(s.dataset);
  {
    auto cfg = s;
    cfg.sampler.strategy = SamplerConfig::Strategy::biased;
    cfg.sampler.batch_size = 8;
    cfg.sampler.fg_fraction = 0.5;
    const auto out =
        train(scenes, cfg.anchors, cfg.detector, cfg.loss, cfg.sampler, cfg.schedule, 3);
    CHECK(out.record.status == RunStatus::completed);
  }
  {
    auto cfg = s;
    cfg.sampler.strategy = SamplerConfig::Strategy::ohem;
    cfg.sampler.top_k = 6;
    const auto out =
        train(scenes, cfg.anchors, cfg.detector, cfg.loss, cfg.sampler, cfg.schedule, 3);
    CHECK(out.record.status == RunStatus::completed);
  }
  {
    auto cfg = s;
    cfg.loss = LossConfig{};
    cfg.loss.variant = ClsVariant::ghmc;
    cfg.loss.guided = true;
    const auto out =
        train(scenes, cfg.anchors, cfg.detector, cfg.loss, cfg.sampler, cfg.schedule, 3);
    CHECK(out.record.status == RunStatus::completed);
    CHECK_FALSE(out.record.init_check.has_value());  // no closed form for GHM-C
  }
}

TEST_CASE("loss_balance_report: guided runs sit exactly at ratio 1") {
  auto s = tiny_setup();
  s.loss.guided = true;
  s.detector.init_policy = {InitPolicyKind::optimal_bias, 0.0};
  s.schedule.iterations = 60;
  const auto scenes = generate(s.dataset);
  const auto out = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, 8);
  const auto report = loss_balance_report(out.record, 50);
  REQUIRE(report.windows.size() == 2);
  for (const auto& w : report.windows) {
    CHECK(w.mean_ratio == 1.0);
    CHECK_FALSE(w.flagged);
  }
  CHECK_FALSE(report.any_flagged);
}

TEST_CASE("loss_balance_report flags a tiny fixed weight as imbalanced") {
  auto s = tiny_setup();
  s.loss.fixed_w = 1e-3;
  s.loss.init_pi = 1e-2;
  s.detector.init_policy = {InitPolicyKind::manual_pi, 1e-2};
  s.schedule.iterations = 50;
  const auto scenes = generate(s.dataset);
  const auto out = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, 8);
  REQUIRE(out.record.status == RunStatus::completed);
  const auto report = loss_balance_report(out.record, 50);
  REQUIRE_FALSE(report.windows.empty());
  CHECK(report.windows[0].mean_ratio > 5.0);
  CHECK(report.any_flagged);
}

TEST_CASE("loss_balance_report edge cases") {
  RunRecord empty;
  CHECK(loss_balance_report(empty).windows.empty());

  RunRecord diverged;
  diverged.status = RunStatus::diverged;
  diverged.diverged_at = 3;
  for (int64_t t = 0; t < 3; ++t) {
    IterationRow row;
    row.t = t;
    row.reg = 1.0;
    row.cls_weighted = 1.0;
    diverged.rows.push_back(row);
  }
  const auto report = loss_balance_report(diverged, 2);
  CHECK(report.windows.size() == 2);  // report up to the divergence point
}

TEST_CASE("run record files are deterministic and parseable") {
  auto s = tiny_setup();
  s.loss.guided = true;
  s.detector.init_policy = {InitPolicyKind::optimal_bias, 0.0};
  const auto scenes = generate(s.dataset);
  const auto out = train(scenes, s.anchors, s.detector, s.loss, s.sampler, s.schedule, 13,
                         "cafecafecafecafe");
  const auto csv = run_record_csv(out.record);
  const auto rows = csv_parse(csv);
  REQUIRE(rows.size() == out.record.rows.size() + 1);
  CHECK(rows[0] == CsvRow{"t", "cls_raw", "cls_weighted", "reg", "w", "lr", "skipped"});
  const auto header = run_record_header_json(out.record);
  CHECK(header.find("\"config_digest\": \"cafecafecafecafe\"") != std::string::npos);
  CHECK(header.find("\"status\": \"completed\"") != std::string::npos);
}
