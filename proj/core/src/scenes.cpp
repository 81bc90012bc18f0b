#include "imblab/scenes.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "imblab/errors.hpp"
#include "imblab/io.hpp"
#include "imblab/log.hpp"
#include "imblab/rng.hpp"
#include "json_codec.hpp"

namespace imblab {

const char* texture_kind_name(TextureKind k) {
  switch (k) {
    case TextureKind::solid: return "solid";
    case TextureKind::ring: return "ring";
    case TextureKind::checker: return "checker";
  }
  return "solid";
}

TextureKind texture_kind_from_name(const std::string& name) {
  if (name == "solid") return TextureKind::solid;
  if (name == "ring") return TextureKind::ring;
  if (name == "checker") return TextureKind::checker;
  throw ConfigError("unknown texture kind '" + name + "'");
}

std::vector<TextureRule> default_textures(int num_classes) {
  std::vector<TextureRule> rules;
  rules.reserve(num_classes);
  for (int i = 0; i < num_classes; ++i) {
    const int cycle = i / 3;
    TextureRule r;
    r.kind = static_cast<TextureKind>(i % 3);
    r.fg_level = std::max(0.3, 0.9 - 0.12 * cycle);
    r.bg_level = std::min(0.65, 0.35 + 0.08 * cycle);
    rules.push_back(r);
  }
  return rules;
}

std::vector<double> render_texture(const TextureRule& rule, int w, int h) {
  std::vector<double> t(static_cast<size_t>(w) * h, rule.fg_level);
  switch (rule.kind) {
    case TextureKind::solid:
      break;
    case TextureKind::ring: {
      const int border = 2;
      for (int y = border; y < h - border; ++y)
        for (int x = border; x < w - border; ++x) t[y * w + x] = rule.bg_level;
      break;
    }
    case TextureKind::checker: {
      const int cell = 2;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (((x / cell) + (y / cell)) % 2 == 1) t[y * w + x] = rule.bg_level;
      break;
    }
  }
  return t;
}

namespace {

void validate_spec(const DatasetSpec& spec) {
  if (spec.num_scenes <= 0) throw ConfigError("DatasetSpec: num_scenes must be positive");
  if (spec.num_classes < 1) throw ConfigError("DatasetSpec: num_classes must be >= 1");
  if (spec.height <= 0 || spec.width <= 0) throw ConfigError("DatasetSpec: bad grid size");
  if (spec.objects_per_scene[0] < 0 || spec.objects_per_scene[1] < spec.objects_per_scene[0])
    throw ConfigError("DatasetSpec: bad objects_per_scene range");
  if (spec.object_size[0] < 3 || spec.object_size[1] < spec.object_size[0])
    throw ConfigError("DatasetSpec: bad object_size range (min side is 3)");
  if (spec.object_size[1] > std::min(spec.height, spec.width))
    throw ConfigError("DatasetSpec: object_size max exceeds grid");
  if (spec.background_noise < 0.0 || spec.background_noise >= 0.3)
    throw ConfigError("DatasetSpec: background_noise must be in [0, 0.3)");
  if (spec.annotation_jitter < 0 || 2 * spec.annotation_jitter >= spec.object_size[0])
    throw ConfigError("DatasetSpec: annotation_jitter must be >= 0 and small vs object_size");
  if (!spec.class_textures.empty() &&
      static_cast<int>(spec.class_textures.size()) != spec.num_classes)
    throw ConfigError("DatasetSpec: class_textures size must equal num_classes");
}

// Placement constraint: pairwise IoU <= 0.3, and pairwise intersection at
// most 0.3 * min(area) so no object is mostly occluded by a later one.
bool placement_ok(const Box& candidate, const std::vector<Box>& placed) {
  for (const auto& other : placed) {
    if (iou(candidate, other) > 0.3) return false;
    const double ix = std::min(candidate.x2, other.x2) - std::max(candidate.x1, other.x1);
    const double iy = std::min(candidate.y2, other.y2) - std::max(candidate.y1, other.y1);
    const double inter = (ix > 0 && iy > 0) ? ix * iy : 0.0;
    if (inter > 0.3 * std::min(candidate.area(), other.area())) return false;
  }
  return true;
}

Scene generate_scene(const DatasetSpec& spec, const std::vector<TextureRule>& textures,
                     int64_t scene_id) {
  Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(scene_id)));
  Scene scene;
  scene.scene_id = scene_id;
  scene.height = spec.height;
  scene.width = spec.width;
  scene.image.resize(static_cast<size_t>(spec.height) * spec.width);
  for (auto& px : scene.image) px = rng.uniform(0.0, spec.background_noise);

  const int want = static_cast<int>(
      rng.uniform_int(spec.objects_per_scene[0], spec.objects_per_scene[1]));
  const int jitter = spec.annotation_jitter;
  std::vector<Box> pixel_boxes;  // where textures are drawn
  int dropped = 0;
  for (int obj = 0; obj < want; ++obj) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const int w = static_cast<int>(rng.uniform_int(spec.object_size[0], spec.object_size[1]));
      const int h = static_cast<int>(rng.uniform_int(spec.object_size[0], spec.object_size[1]));
      const int x1 = static_cast<int>(rng.uniform_int(jitter, spec.width - w - jitter));
      const int y1 = static_cast<int>(rng.uniform_int(jitter, spec.height - h - jitter));
      const int label = static_cast<int>(rng.uniform_int(1, spec.num_classes));
      const Box pixels{static_cast<double>(x1), static_cast<double>(y1),
                       static_cast<double>(x1 + w), static_cast<double>(y1 + h)};
      // Recorded annotation: each edge offset independently by the jitter.
      Box gt = pixels;
      if (jitter > 0) {
        gt.x1 += static_cast<double>(rng.uniform_int(-jitter, jitter));
        gt.y1 += static_cast<double>(rng.uniform_int(-jitter, jitter));
        gt.x2 += static_cast<double>(rng.uniform_int(-jitter, jitter));
        gt.y2 += static_cast<double>(rng.uniform_int(-jitter, jitter));
      }
      if (!placement_ok(gt, scene.gt_boxes)) continue;
      pixel_boxes.push_back(pixels);
      scene.gt_boxes.push_back(gt);
      scene.gt_labels.push_back(label);
      placed = true;
    }
    if (!placed) ++dropped;
  }
  if (dropped > 0)
    log_warn("scene " + std::to_string(scene_id) + ": dropped " + std::to_string(dropped) +
             " object(s) after placement retries");

  // Later objects draw over earlier ones.
  for (size_t i = 0; i < pixel_boxes.size(); ++i) {
    const Box& b = pixel_boxes[i];
    const int w = static_cast<int>(b.width());
    const int h = static_cast<int>(b.height());
    const auto tex = render_texture(textures[scene.gt_labels[i] - 1], w, h);
    const int x0 = static_cast<int>(b.x1);
    const int y0 = static_cast<int>(b.y1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        scene.image[(y0 + y) * spec.width + (x0 + x)] = tex[y * w + x];
  }
  return scene;
}

}  // namespace

std::vector<Scene> generate(const DatasetSpec& spec) {
  validate_spec(spec);
  const auto textures =
      spec.class_textures.empty() ? default_textures(spec.num_classes) : spec.class_textures;
  std::vector<Scene> scenes;
  scenes.reserve(spec.num_scenes);
  for (int64_t id = 0; id < spec.num_scenes; ++id)
    scenes.push_back(generate_scene(spec, textures, id));
  return scenes;
}

std::pair<std::vector<Scene>, std::vector<Scene>> split(const std::vector<Scene>& scenes,
                                                        double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("split: train_fraction must be in (0,1)");
  if (scenes.size() < 2) throw DataError("split: need at least two scenes");
  std::vector<Scene> ordered = scenes;
  std::sort(ordered.begin(), ordered.end(),
            [](const Scene& a, const Scene& b) { return a.scene_id < b.scene_id; });
  const auto n = static_cast<int64_t>(ordered.size());
  // floor with a tiny nudge so e.g. 600 * (500/600) lands on 500
  auto k = static_cast<int64_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  k = std::clamp<int64_t>(k, 1, n - 1);
  std::vector<Scene> train(ordered.begin(), ordered.begin() + k);
  std::vector<Scene> eval(ordered.begin() + k, ordered.end());
  return {std::move(train), std::move(eval)};
}

std::string scene_text(const Scene& scene) {
  std::string out = "1 " + std::to_string(scene.height) + " " + std::to_string(scene.width) + "\n";
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      if (x) out += ' ';
      out += format_double(scene.image[y * scene.width + x]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::string gt_text(const Scene& scene) {
  std::string out;
  for (size_t i = 0; i < scene.gt_boxes.size(); ++i) {
    const Box& b = scene.gt_boxes[i];
    out += std::to_string(scene.gt_labels[i]) + " " + format_double(b.x1) + " " +
           format_double(b.y1) + " " + format_double(b.x2) + " " + format_double(b.y2) + "\n";
  }
  return out;
}

}  // namespace

std::string scene_digest(const Scene& scene) {
  return digest_hex(scene_text(scene) + gt_text(scene));
}

std::string dataset_digest(const DatasetSpec& spec, const std::vector<Scene>& scenes) {
  nlohmann::json j = spec;
  std::string acc = j.dump();
  for (const auto& s : scenes) acc += scene_digest(s);
  return digest_hex(acc);
}

void save_dataset(const std::string& dir, const DatasetSpec& spec,
                  const std::vector<Scene>& scenes, bool force) {
  const std::string manifest_path = dir + "/manifest.json";
  if (file_exists(manifest_path) && !force)
    throw DataError("dataset already exists at " + dir + " (use force to overwrite)");
  ensure_dir(dir + "/scenes");

  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["spec"] = spec;
  manifest["dataset_digest"] = dataset_digest(spec, scenes);
  auto& jscenes = manifest["scenes"] = nlohmann::json::array();
  for (const auto& s : scenes) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%06lld.txt", static_cast<long long>(s.scene_id));
    const std::string rel = std::string("scenes/") + name;
    write_text_file(dir + "/" + rel, scene_text(s));
    nlohmann::json js;
    js["scene_id"] = s.scene_id;
    js["file"] = rel;
    js["digest"] = scene_digest(s);
    auto& gt = js["gt"] = nlohmann::json::array();
    for (size_t i = 0; i < s.gt_boxes.size(); ++i) {
      const Box& b = s.gt_boxes[i];
      gt.push_back({{"box", {b.x1, b.y1, b.x2, b.y2}}, {"label", s.gt_labels[i]}});
    }
    jscenes.push_back(std::move(js));
  }
  write_text_file(manifest_path, manifest.dump(2) + "\n");
}

LoadedDataset load_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.json";
  if (!file_exists(manifest_path)) throw DataError("no dataset manifest at " + manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed dataset manifest: " + std::string(e.what()));
  }
  LoadedDataset out;
  out.spec = manifest.at("spec").get<DatasetSpec>();
  out.digest = manifest.at("dataset_digest").get<std::string>();
  for (const auto& js : manifest.at("scenes")) {
    Scene s;
    s.scene_id = js.at("scene_id").get<int64_t>();
    const std::string text = read_text_file(dir + "/" + js.at("file").get<std::string>());
    size_t pos = 0;
    auto next_token = [&]() -> std::string_view {
      while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\n')) ++pos;
      size_t start = pos;
      while (pos < text.size() && text[pos] != ' ' && text[pos] != '\n') ++pos;
      return std::string_view(text).substr(start, pos - start);
    };
    if (next_token() != "1") throw DataError("scene file: expected 1 channel");
    s.height = static_cast<int>(parse_double(next_token()));
    s.width = static_cast<int>(parse_double(next_token()));
    s.image.resize(static_cast<size_t>(s.height) * s.width);
    for (auto& px : s.image) px = parse_double(next_token());
    for (const auto& jg : js.at("gt")) {
      const auto& b = jg.at("box");
      s.gt_boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                            b.at(3).get<double>()});
      s.gt_labels.push_back(jg.at("label").get<int>());
    }
    if (scene_digest(s) != js.at("digest").get<std::string>())
      throw DataError("scene " + std::to_string(s.scene_id) + ": digest mismatch");
    out.scenes.push_back(std::move(s));
  }
  return out;
}

}  // namespace imblab
