#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "imblab/errors.hpp"
#include "imblab/experiment.hpp"
#include "imblab/io.hpp"
#include "imblab/log.hpp"
#include "imblab/scenes.hpp"

using namespace imblab;

namespace {

DatasetSpec small_spec(uint64_t seed = 7) {
  DatasetSpec spec;
  spec.num_scenes = 10;
  spec.height = 48;
  spec.width = 48;
  spec.num_classes = 3;
  spec.objects_per_scene = {1, 3};
  spec.object_size = {8, 16};
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("generation is deterministic: same spec, same digests") {
  const auto spec = small_spec(7);
  const auto a = generate(spec);
  const auto b = generate(spec);
  REQUIRE(a.size() == 10);
  for (size_t i = 0; i < a.size(); ++i) CHECK(scene_digest(a[i]) == scene_digest(b[i]));
  CHECK(dataset_digest(spec, a) == dataset_digest(spec, b));
  auto other = spec;
  other.seed = 8;
  CHECK(dataset_digest(other, generate(other)) != dataset_digest(spec, a));
}

TEST_CASE("objects_per_scene of zero gives pure-background scenes") {
  auto spec = small_spec();
  spec.objects_per_scene = {0, 0};
  for (const auto& s : generate(spec)) {
    CHECK(s.gt_boxes.empty());
    CHECK(s.gt_labels.empty());
  }
}

TEST_CASE("emitted boxes satisfy the pairwise IoU constraint (brute force)") {
  DatasetSpec spec;
  spec.num_scenes = 25;
  spec.height = 64;
  spec.width = 64;
  spec.num_classes = 3;
  spec.objects_per_scene = {1, 3};
  spec.object_size = {8, 20};
  spec.seed = 1;
  for (const auto& s : generate(spec)) {
    for (size_t i = 0; i < s.gt_boxes.size(); ++i)
      for (size_t j = i + 1; j < s.gt_boxes.size(); ++j)
        CHECK(iou(s.gt_boxes[i], s.gt_boxes[j]) <= 0.3);
  }
}

TEST_CASE("scene invariants: box bounds, labels, image range") {
  const auto scenes = generate(small_spec(3));
  for (const auto& s : scenes) {
    CHECK(s.gt_boxes.size() == s.gt_labels.size());
    for (size_t i = 0; i < s.gt_boxes.size(); ++i) {
      const Box& b = s.gt_boxes[i];
      CHECK(b.x1 >= 0);
      CHECK(b.y1 >= 0);
      CHECK(b.x1 < b.x2);
      CHECK(b.y1 < b.y2);
      CHECK(b.x2 <= s.width);
      CHECK(b.y2 <= s.height);
      CHECK(s.gt_labels[i] >= 1);
      CHECK(s.gt_labels[i] <= 3);
    }
    for (double px : s.image) {
      CHECK(std::isfinite(px));
      CHECK(px >= 0.0);
      CHECK(px <= 1.0);
    }
  }
}

TEST_CASE("label-texture consistency: nearest template recovers the label") {
  // Classify each gt region by L2 distance to the class templates. Pixels
  // possibly covered by a later-drawn object are masked out (annotations may
  // be jittered, so occluder boxes are inflated by the jitter radius), and
  // the template match searches alignments within the jitter radius.
  const auto spec = imb_std_preset().dataset;
  const auto textures = default_textures(spec.num_classes);
  const int jitter = spec.annotation_jitter;
  auto scenes = generate(spec);
  scenes.resize(120);  // plenty of objects, keeps the test quick
  for (const auto& s : scenes) {
    for (size_t i = 0; i < s.gt_boxes.size(); ++i) {
      const Box& b = s.gt_boxes[i];
      const int w = static_cast<int>(b.width());
      const int h = static_cast<int>(b.height());
      const int x0 = static_cast<int>(b.x1);
      const int y0 = static_cast<int>(b.y1);
      std::vector<char> visible(static_cast<size_t>(w) * h, 1);
      for (size_t j = i + 1; j < s.gt_boxes.size(); ++j) {
        const Box& o = s.gt_boxes[j];
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double px = x0 + x + 0.5, py = y0 + y + 0.5;
            if (px > o.x1 - jitter && px < o.x2 + jitter && py > o.y1 - jitter &&
                py < o.y2 + jitter)
              visible[y * w + x] = 0;
          }
      }
      int best_label = -1;
      double best_dist = 0.0;
      for (int c = 1; c <= spec.num_classes; ++c) {
        const auto tmpl = render_texture(textures[c - 1], w, h);
        double class_dist = -1.0;
        for (int sy = -jitter; sy <= jitter; ++sy)
          for (int sx = -jitter; sx <= jitter; ++sx) {
            double dist = 0.0;
            int64_t count = 0;
            for (int y = 0; y < h; ++y)
              for (int x = 0; x < w; ++x) {
                if (!visible[y * w + x]) continue;
                const int tx = x - sx, ty = y - sy;
                if (tx < 0 || tx >= w || ty < 0 || ty >= h) continue;
                const double d =
                    s.image[(y0 + y) * s.width + (x0 + x)] - tmpl[ty * w + tx];
                dist += d * d;
                ++count;
              }
            if (count == 0) continue;
            const double mean_dist = dist / static_cast<double>(count);
            if (class_dist < 0.0 || mean_dist < class_dist) class_dist = mean_dist;
          }
        if (best_label < 0 || (class_dist >= 0.0 && class_dist < best_dist)) {
          best_label = c;
          best_dist = class_dist;
        }
      }
      CHECK(best_label == s.gt_labels[i]);
    }
  }
}

TEST_CASE("split honors fraction, determinism and non-empty sides") {
  auto spec = small_spec(11);
  spec.num_scenes = 100;
  const auto scenes = generate(spec);
  const auto [train, eval] = split(scenes, 0.8);
  CHECK(train.size() == 80);
  CHECK(eval.size() == 20);
  std::set<int64_t> train_ids, eval_ids;
  for (const auto& s : train) train_ids.insert(s.scene_id);
  for (const auto& s : eval) eval_ids.insert(s.scene_id);
  for (int64_t id : eval_ids) CHECK(train_ids.count(id) == 0);
  const auto [train2, eval2] = split(scenes, 0.8);
  CHECK(train2.size() == train.size());
  for (size_t i = 0; i < train.size(); ++i)
    CHECK(train2[i].scene_id == train[i].scene_id);

  auto tiny = scenes;
  tiny.resize(10);
  const auto [t9, e1] = split(tiny, 0.999);
  CHECK(t9.size() == 9);
  CHECK(e1.size() == 1);

  CHECK_THROWS_AS(split(scenes, 0.0), ConfigError);
  CHECK_THROWS_AS(split(scenes, 1.0), ConfigError);
  std::vector<Scene> one(scenes.begin(), scenes.begin() + 1);
  CHECK_THROWS_AS(split(one, 0.5), DataError);
}

TEST_CASE("dataset files round-trip with digest verification") {
  const auto spec = small_spec(21);
  const auto scenes = generate(spec);
  const std::string dir = "scene_roundtrip_dir";
  save_dataset(dir, spec, scenes, /*force=*/true);
  const auto loaded = load_dataset(dir);
  CHECK(loaded.scenes.size() == scenes.size());
  CHECK(loaded.digest == dataset_digest(spec, scenes));
  for (size_t i = 0; i < scenes.size(); ++i) {
    CHECK(loaded.scenes[i].image == scenes[i].image);
    CHECK(loaded.scenes[i].gt_labels == scenes[i].gt_labels);
  }
  CHECK_THROWS_AS(save_dataset(dir, spec, scenes, /*force=*/false), DataError);
}

TEST_CASE("infeasible placement drops objects with a warning") {
  DatasetSpec spec;
  spec.num_scenes = 4;
  spec.height = 24;
  spec.width = 24;
  spec.num_classes = 1;
  spec.objects_per_scene = {6, 6};  // cannot fit six 16px objects in 24x24
  spec.object_size = {16, 16};
  spec.seed = 5;
  int warnings = 0;
  set_log_handler([&](LogLevel level, const std::string&) {
    if (level == LogLevel::warn) ++warnings;
  });
  const auto scenes = generate(spec);
  set_log_handler(nullptr);
  CHECK(warnings > 0);
  for (const auto& s : scenes) CHECK(s.gt_boxes.size() < 6);
}
