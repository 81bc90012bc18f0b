#include "json_codec.hpp"

#include "imblab/errors.hpp"

namespace imblab {

namespace {

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_opt(const nlohmann::json& j, const char* key, std::optional<double>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<double>();
  else out.reset();
}

}  // namespace

void to_json(nlohmann::json& j, const TextureRule& r) {
  j = {{"kind", texture_kind_name(r.kind)},
       {"fg_level", r.fg_level},
       {"bg_level", r.bg_level}};
}

void from_json(const nlohmann::json& j, TextureRule& r) {
  r.kind = texture_kind_from_name(j.at("kind").get<std::string>());
  read(j, "fg_level", r.fg_level);
  read(j, "bg_level", r.bg_level);
}

void to_json(nlohmann::json& j, const DatasetSpec& s) {
  j = {{"num_scenes", s.num_scenes},
       {"height", s.height},
       {"width", s.width},
       {"num_classes", s.num_classes},
       {"objects_per_scene", s.objects_per_scene},
       {"object_size", s.object_size},
       {"class_textures", s.class_textures},
       {"background_noise", s.background_noise},
       {"annotation_jitter", s.annotation_jitter},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, DatasetSpec& s) {
  read(j, "num_scenes", s.num_scenes);
  read(j, "height", s.height);
  read(j, "width", s.width);
  read(j, "num_classes", s.num_classes);
  read(j, "objects_per_scene", s.objects_per_scene);
  read(j, "object_size", s.object_size);
  read(j, "class_textures", s.class_textures);
  read(j, "background_noise", s.background_noise);
  read(j, "annotation_jitter", s.annotation_jitter);
  read(j, "seed", s.seed);
}

void to_json(nlohmann::json& j, const AnchorConfig& c) {
  j = {{"strides", c.strides},
       {"scales", c.scales},
       {"aspect_ratios", c.aspect_ratios},
       {"fg_thresh", c.fg_thresh},
       {"bg_thresh", c.bg_thresh},
       {"count_ignore_in_n", c.count_ignore_in_n}};
}

void from_json(const nlohmann::json& j, AnchorConfig& c) {
  read(j, "strides", c.strides);
  read(j, "scales", c.scales);
  read(j, "aspect_ratios", c.aspect_ratios);
  read(j, "fg_thresh", c.fg_thresh);
  read(j, "bg_thresh", c.bg_thresh);
  read(j, "count_ignore_in_n", c.count_ignore_in_n);
}

namespace {

const char* variant_name(ClsVariant v) {
  switch (v) {
    case ClsVariant::cross_entropy: return "ce";
    case ClsVariant::focal: return "focal";
    case ClsVariant::ghmc: return "ghmc";
  }
  return "ce";
}

ClsVariant variant_from_name(const std::string& name) {
  if (name == "ce") return ClsVariant::cross_entropy;
  if (name == "focal") return ClsVariant::focal;
  if (name == "ghmc") return ClsVariant::ghmc;
  throw ConfigError("unknown classification variant '" + name + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = {{"variant", variant_name(c.variant)},
       {"focal", {{"alpha", c.focal.alpha}, {"gamma", c.focal.gamma}}},
       {"ghmc",
        {{"bins", c.ghmc.bins},
         {"momentum", c.ghmc.momentum},
         {"normalize_by_foreground", c.ghmc.normalize_by_foreground}}},
       {"fixed_w", c.fixed_w ? nlohmann::json(*c.fixed_w) : nlohmann::json(nullptr)},
       {"guided", c.guided},
       {"stage_factor", c.stage_factor},
       {"init_pi", c.init_pi ? nlohmann::json(*c.init_pi) : nlohmann::json(nullptr)},
       {"optimal_bias", c.optimal_bias}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  if (j.contains("variant")) c.variant = variant_from_name(j.at("variant").get<std::string>());
  if (j.contains("focal")) {
    read(j.at("focal"), "alpha", c.focal.alpha);
    read(j.at("focal"), "gamma", c.focal.gamma);
  }
  if (j.contains("ghmc")) {
    read(j.at("ghmc"), "bins", c.ghmc.bins);
    read(j.at("ghmc"), "momentum", c.ghmc.momentum);
    read(j.at("ghmc"), "normalize_by_foreground", c.ghmc.normalize_by_foreground);
  }
  read_opt(j, "fixed_w", c.fixed_w);
  read(j, "guided", c.guided);
  read(j, "stage_factor", c.stage_factor);
  read_opt(j, "init_pi", c.init_pi);
  read(j, "optimal_bias", c.optimal_bias);
}

namespace {

const char* strategy_name(SamplerConfig::Strategy s) {
  switch (s) {
    case SamplerConfig::Strategy::none: return "none";
    case SamplerConfig::Strategy::biased: return "biased";
    case SamplerConfig::Strategy::ohem: return "ohem";
  }
  return "none";
}

SamplerConfig::Strategy strategy_from_name(const std::string& name) {
  if (name == "none") return SamplerConfig::Strategy::none;
  if (name == "biased") return SamplerConfig::Strategy::biased;
  if (name == "ohem") return SamplerConfig::Strategy::ohem;
  throw ConfigError("unknown sampler strategy '" + name + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = {{"strategy", strategy_name(c.strategy)},
       {"batch_size", c.batch_size},
       {"fg_fraction", c.fg_fraction},
       {"top_k", c.top_k},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  if (j.contains("strategy"))
    c.strategy = strategy_from_name(j.at("strategy").get<std::string>());
  read(j, "batch_size", c.batch_size);
  read(j, "fg_fraction", c.fg_fraction);
  read(j, "top_k", c.top_k);
  read(j, "seed", c.seed);
}

namespace {

const char* policy_name(InitPolicyKind k) {
  switch (k) {
    case InitPolicyKind::default_zero_bias: return "default_zero_bias";
    case InitPolicyKind::manual_pi: return "manual_pi";
    case InitPolicyKind::optimal_bias: return "optimal_bias";
  }
  return "default_zero_bias";
}

InitPolicyKind policy_from_name(const std::string& name) {
  if (name == "default_zero_bias") return InitPolicyKind::default_zero_bias;
  if (name == "manual_pi") return InitPolicyKind::manual_pi;
  if (name == "optimal_bias") return InitPolicyKind::optimal_bias;
  throw ConfigError("unknown init policy '" + name + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const DetectorConfig& c) {
  j = {{"channels", c.channels},
       {"conv_strides", c.conv_strides},
       {"head_depth", c.head_depth},
       {"kernel", c.kernel},
       {"num_classes", c.num_classes},
       {"anchors_per_location", c.anchors_per_location},
       {"input_height", c.input_height},
       {"input_width", c.input_width},
       {"head_weight_std", c.head_weight_std},
       {"init_policy", {{"kind", policy_name(c.init_policy.kind)}, {"pi", c.init_policy.pi}}}};
}

void from_json(const nlohmann::json& j, DetectorConfig& c) {
  read(j, "channels", c.channels);
  read(j, "conv_strides", c.conv_strides);
  read(j, "head_depth", c.head_depth);
  read(j, "kernel", c.kernel);
  read(j, "num_classes", c.num_classes);
  read(j, "anchors_per_location", c.anchors_per_location);
  read(j, "input_height", c.input_height);
  read(j, "input_width", c.input_width);
  read(j, "head_weight_std", c.head_weight_std);
  if (j.contains("init_policy")) {
    const auto& jp = j.at("init_policy");
    c.init_policy.kind = policy_from_name(jp.at("kind").get<std::string>());
    read(jp, "pi", c.init_policy.pi);
  }
}

void to_json(nlohmann::json& j, const Schedule& s) {
  j = {{"iterations", s.iterations},
       {"learning_rate", s.learning_rate},
       {"batch_scenes", s.batch_scenes}};
}

void from_json(const nlohmann::json& j, Schedule& s) {
  read(j, "iterations", s.iterations);
  read(j, "learning_rate", s.learning_rate);
  read(j, "batch_scenes", s.batch_scenes);
}

void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"threshold_policy",
        c.policy == EvalConfig::ThresholdPolicy::adaptive ? "adaptive" : "fixed"},
       {"theta", c.theta},
       {"nms_iou", c.nms_iou},
       {"max_detections", c.max_detections},
       {"ap_iou_thresholds", c.ap_iou_thresholds},
       {"sweep_thetas", c.sweep_thetas},
       {"sweep_adaptive", c.sweep_adaptive}};
}

void from_json(const nlohmann::json& j, EvalConfig& c) {
  if (j.contains("threshold_policy")) {
    const auto name = j.at("threshold_policy").get<std::string>();
    if (name == "fixed") c.policy = EvalConfig::ThresholdPolicy::fixed;
    else if (name == "adaptive") c.policy = EvalConfig::ThresholdPolicy::adaptive;
    else throw ConfigError("unknown threshold policy '" + name + "'");
  }
  read(j, "theta", c.theta);
  read(j, "nms_iou", c.nms_iou);
  read(j, "max_detections", c.max_detections);
  read(j, "ap_iou_thresholds", c.ap_iou_thresholds);
  read(j, "sweep_thetas", c.sweep_thetas);
  read(j, "sweep_adaptive", c.sweep_adaptive);
}

void to_json(nlohmann::json& j, const ImbalanceStats& s) {
  j = {{"n_total", s.n_total}, {"nf_total", s.nf_total}, {"ratio", s.ratio}};
}

void from_json(const nlohmann::json& j, ImbalanceStats& s) {
  read(j, "n_total", s.n_total);
  read(j, "nf_total", s.nf_total);
  read(j, "ratio", s.ratio);
}

}  // namespace imblab
