#include "imblab/experiment.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "imblab/errors.hpp"
#include "imblab/io.hpp"
#include "json_codec.hpp"

namespace imblab {

namespace {

void to_json_row(nlohmann::json& j, const AnalyzeRow& r) {
  j = {{"variant", r.variant}, {"alpha", r.alpha},          {"gamma", r.gamma},
       {"w", r.w},             {"pi", r.pi},
       {"ratio", r.ratio ? nlohmann::json(*r.ratio) : nlohmann::json(nullptr)},
       {"classes", r.classes ? nlohmann::json(*r.classes) : nlohmann::json(nullptr)}};
}

AnalyzeRow row_from_json(const nlohmann::json& j) {
  AnalyzeRow r;
  if (j.contains("variant")) r.variant = j.at("variant").get<std::string>();
  if (r.variant != "focal" && r.variant != "ce")
    throw ConfigError("analyze row variant must be 'focal' or 'ce'");
  if (j.contains("alpha")) r.alpha = j.at("alpha").get<double>();
  if (j.contains("gamma")) r.gamma = j.at("gamma").get<double>();
  if (j.contains("w")) r.w = j.at("w").get<double>();
  if (j.contains("pi")) r.pi = j.at("pi").get<double>();
  if (j.contains("ratio") && !j.at("ratio").is_null()) r.ratio = j.at("ratio").get<double>();
  if (j.contains("classes") && !j.at("classes").is_null())
    r.classes = j.at("classes").get<double>();
  return r;
}

nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = cfg.schema_version;
  j["dataset"] = cfg.dataset;
  j["train_fraction"] = cfg.train_fraction;
  j["anchors"] = cfg.anchors;
  j["detector"] = cfg.detector;
  j["loss"] = cfg.loss;
  j["sampler"] = cfg.sampler;
  j["schedule"] = cfg.schedule;
  j["eval"] = cfg.eval;
  j["seed"] = cfg.seed;
  auto& rows = j["analyze_rows"] = nlohmann::json::array();
  for (const auto& r : cfg.analyze_rows) {
    nlohmann::json jr;
    to_json_row(jr, r);
    rows.push_back(std::move(jr));
  }
  return j;
}

}  // namespace

void resolve_experiment(ExperimentConfig& cfg) {
  cfg.detector.input_height = cfg.dataset.height;
  cfg.detector.input_width = cfg.dataset.width;
  cfg.detector.num_classes = cfg.dataset.num_classes;
  cfg.detector.anchors_per_location =
      static_cast<int>(cfg.anchors.scales.size() * cfg.anchors.aspect_ratios.size());
  if (cfg.loss.optimal_bias) {
    cfg.detector.init_policy = {InitPolicyKind::optimal_bias, 0.0};
  } else if (cfg.loss.init_pi) {
    cfg.detector.init_policy = {InitPolicyKind::manual_pi, *cfg.loss.init_pi};
  } else {
    cfg.detector.init_policy = {InitPolicyKind::default_zero_bias, 0.0};
  }
}

void ExperimentConfig::validate() const {
  if (schema_version != 1)
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0,1)");
  loss.validate();
  sampler.validate();
  schedule.validate();
  eval.validate();
  detector.validate();
  // Anchor grid and detector must agree on the detection level.
  const AnchorSet anchors_set = build_anchors(dataset.height, dataset.width, anchors);
  if (anchors_set.total() != detector.anchor_capacity())
    throw ConfigError("anchor grid (" + std::to_string(anchors_set.total()) +
                      ") does not match detector capacity (" +
                      std::to_string(detector.anchor_capacity()) +
                      "); check strides vs conv_strides");
  for (const auto& r : analyze_rows)
    if (r.variant != "focal" && r.variant != "ce")
      throw ConfigError("analyze row variant must be 'focal' or 'ce'");
}

std::string ExperimentConfig::canonical_json() const {
  return experiment_to_json(*this).dump();  // nlohmann orders keys, so this is canonical
}

std::string ExperimentConfig::digest() const { return digest_hex(canonical_json()); }

ExperimentConfig experiment_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed experiment config: " + std::string(e.what()));
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("schema_version")) cfg.schema_version = j.at("schema_version").get<int>();
    if (j.contains("dataset")) cfg.dataset = j.at("dataset").get<DatasetSpec>();
    if (j.contains("train_fraction")) cfg.train_fraction = j.at("train_fraction").get<double>();
    if (j.contains("anchors")) cfg.anchors = j.at("anchors").get<AnchorConfig>();
    if (j.contains("detector")) cfg.detector = j.at("detector").get<DetectorConfig>();
    if (j.contains("loss")) cfg.loss = j.at("loss").get<LossConfig>();
    if (j.contains("sampler")) cfg.sampler = j.at("sampler").get<SamplerConfig>();
    if (j.contains("schedule")) cfg.schedule = j.at("schedule").get<Schedule>();
    if (j.contains("eval")) cfg.eval = j.at("eval").get<EvalConfig>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("analyze_rows"))
      for (const auto& jr : j.at("analyze_rows")) cfg.analyze_rows.push_back(row_from_json(jr));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("experiment config field error: " + std::string(e.what()));
  }
  resolve_experiment(cfg);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  if (!file_exists(path)) throw ConfigError("no config file at " + path);
  return experiment_from_json_text(read_text_file(path));
}

void save_experiment_config(const std::string& path, const ExperimentConfig& cfg) {
  write_text_file(path, experiment_to_json(cfg).dump(2) + "\n");
}

ExperimentConfig imb_std_preset() {
  ExperimentConfig cfg;
  cfg.dataset.num_scenes = 600;
  cfg.dataset.height = 64;
  cfg.dataset.width = 64;
  cfg.dataset.num_classes = 3;
  cfg.dataset.objects_per_scene = {1, 3};
  cfg.dataset.object_size = {8, 20};
  cfg.dataset.background_noise = 0.1;
  cfg.dataset.annotation_jitter = 1;
  cfg.dataset.seed = 9151;  // dataset stream is fixed; experiment seed varies the run
  cfg.train_fraction = 500.0 / 600.0;

  cfg.anchors.strides = {4};
  cfg.anchors.scales = {2.0, 3.0, 4.5, 8.0};
  cfg.anchors.aspect_ratios = {1.0};
  cfg.anchors.fg_thresh = 0.5;
  cfg.anchors.bg_thresh = 0.4;

  cfg.detector.channels = {8, 16, 16};
  cfg.detector.conv_strides = {2, 2, 1};
  cfg.detector.head_depth = 1;
  cfg.detector.kernel = 3;

  cfg.loss.variant = ClsVariant::cross_entropy;
  cfg.loss.guided = true;
  cfg.loss.optimal_bias = true;

  cfg.schedule.iterations = 16000;
  cfg.schedule.learning_rate = 0.03;
  cfg.schedule.batch_scenes = 4;

  cfg.eval.policy = EvalConfig::ThresholdPolicy::adaptive;

  cfg.analyze_rows.push_back({"focal", 0.25, 2.0, 1.0, 1e-2, 1e3, 80.0});
  cfg.analyze_rows.push_back({"ce", 0.25, 0.0, 0.1, 1e-5, 1e3, 80.0});
  cfg.analyze_rows.push_back({"focal", 0.25, 2.0, 1.0, 1e-2, std::nullopt, std::nullopt});
  cfg.analyze_rows.push_back({"ce", 0.25, 0.0, 1.0, 1e-2, std::nullopt, std::nullopt});

  cfg.seed = 1;
  resolve_experiment(cfg);
  return cfg;
}

ExperimentConfig preset_by_name(const std::string& name) {
  if (name == "imb-std" || name == "imb_std") return imb_std_preset();
  throw ConfigError("unknown preset '" + name + "' (available: imb-std)");
}

}  // namespace imblab
