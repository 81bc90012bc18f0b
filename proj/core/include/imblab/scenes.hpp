#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "imblab/geometry.hpp"

namespace imblab {

enum class TextureKind { solid, ring, checker };

const char* texture_kind_name(TextureKind k);
TextureKind texture_kind_from_name(const std::string& name);

// Renderable pattern for one object class. `fg_level` is the pattern
// intensity, `bg_level` fills ring interiors / checker off-cells.
struct TextureRule {
  TextureKind kind = TextureKind::solid;
  double fg_level = 0.9;
  double bg_level = 0.35;
};

std::vector<TextureRule> default_textures(int num_classes);

struct DatasetSpec {
  int num_scenes = 600;
  int height = 64;
  int width = 64;
  int num_classes = 3;
  std::array<int, 2> objects_per_scene = {1, 3};  // inclusive
  std::array<int, 2> object_size = {8, 20};       // inclusive, pixels per side
  std::vector<TextureRule> class_textures;        // size num_classes; default_textures if empty
  double background_noise = 0.1;                  // uniform noise amplitude
  // Annotation noise: each recorded gt edge is offset from the rendered
  // pixels by a uniform integer in [-annotation_jitter, +annotation_jitter].
  // Gives the box-regression task an irreducible error floor, as real
  // annotations do.
  int annotation_jitter = 0;
  uint64_t seed = 0;
};

// One synthetic image with ground truth. image is [1, H, W] row-major,
// values in [0, 1].
struct Scene {
  int64_t scene_id = 0;
  int height = 0;
  int width = 0;
  std::vector<double> image;
  std::vector<Box> gt_boxes;
  std::vector<int> gt_labels;  // values in [1, C]
};

// Deterministic generation: each scene uses a stream derived from
// (spec.seed, scene_id), so results are identical however scenes are
// scheduled. Placed boxes are rejection-resampled until pairwise IoU <= 0.3
// and pairwise overlap <= 0.3 * min(area) hold; if a placement cannot be
// found within the retry budget the scene carries fewer objects and a
// warning is logged.
std::vector<Scene> generate(const DatasetSpec& spec);

// Deterministic split by scene_id order: first floor(fraction * n) scenes
// (clamped so both sides are non-empty) form the train set.
std::pair<std::vector<Scene>, std::vector<Scene>> split(const std::vector<Scene>& scenes,
                                                        double train_fraction);

// Size-(w x h) intensity template for a rule, as rendered into a gt box.
std::vector<double> render_texture(const TextureRule& rule, int w, int h);

// Canonical text form of a scene (also the on-disk flat-file content).
std::string scene_text(const Scene& scene);
std::string scene_digest(const Scene& scene);
std::string dataset_digest(const DatasetSpec& spec, const std::vector<Scene>& scenes);

// Dataset file layout: <dir>/manifest.json plus <dir>/scenes/scene_NNNNNN.txt
// (row-major float text). Field names documented in docs/schema.md.
void save_dataset(const std::string& dir, const DatasetSpec& spec,
                  const std::vector<Scene>& scenes, bool force);

struct LoadedDataset {
  DatasetSpec spec;
  std::vector<Scene> scenes;
  std::string digest;
};
LoadedDataset load_dataset(const std::string& dir);

}  // namespace imblab
