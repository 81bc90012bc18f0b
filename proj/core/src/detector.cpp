#include "imblab/detector.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "imblab/errors.hpp"
#include "imblab/io.hpp"
#include "imblab/losses.hpp"
#include "imblab/rng.hpp"
#include "json_codec.hpp"

namespace imblab {

void DetectorConfig::validate() const {
  if (channels.empty() || channels.size() != conv_strides.size())
    throw ConfigError("DetectorConfig: channels and conv_strides must align and be non-empty");
  for (int c : channels)
    if (c < 1) throw ConfigError("DetectorConfig: channel widths must be >= 1");
  for (int s : conv_strides)
    if (s != 1 && s != 2) throw ConfigError("DetectorConfig: conv strides must be 1 or 2");
  if (head_depth < 1) throw ConfigError("DetectorConfig: head_depth must be >= 1");
  if (kernel < 1 || kernel % 2 == 0)
    throw ConfigError("DetectorConfig: kernel must be odd and positive");
  if (num_classes < 1 || anchors_per_location < 1)
    throw ConfigError("DetectorConfig: num_classes and anchors_per_location must be >= 1");
  if (input_height < 8 || input_width < 8) throw ConfigError("DetectorConfig: input too small");
  if (init_policy.kind == InitPolicyKind::manual_pi &&
      !(init_policy.pi > 0.0 && init_policy.pi < 1.0))
    throw ConfigError("DetectorConfig: manual pi must be in (0,1)");
}

std::pair<int, int> DetectorConfig::feature_size() const {
  int h = input_height, w = input_width;
  const int pad = (kernel - 1) / 2;
  for (int s : conv_strides) {
    h = (h + 2 * pad - kernel) / s + 1;
    w = (w + 2 * pad - kernel) / s + 1;
  }
  return {h, w};
}

int64_t DetectorConfig::anchor_capacity() const {
  auto [h, w] = feature_size();
  return static_cast<int64_t>(h) * w * anchors_per_location;
}

namespace {

std::vector<double> normal_init(int64_t count, double stddev, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(static_cast<size_t>(count));
  for (auto& v : out) v = rng.normal(0.0, stddev);
  return out;
}

struct LayerSpec {
  std::string name;
  int in_ch, out_ch, stride;
  enum class Init { he, head, zero } init;
};

std::vector<LayerSpec> layer_specs(const DetectorConfig& cfg) {
  std::vector<LayerSpec> specs;
  int in_ch = 1;
  for (size_t i = 0; i < cfg.channels.size(); ++i) {
    specs.push_back({"backbone." + std::to_string(i), in_ch, cfg.channels[i],
                     cfg.conv_strides[i], LayerSpec::Init::he});
    in_ch = cfg.channels[i];
  }
  const int feat = in_ch;
  for (const char* head : {"cls_head", "reg_head"}) {
    for (int d = 0; d + 1 < cfg.head_depth; ++d)
      specs.push_back({std::string(head) + "." + std::to_string(d), feat, feat, 1,
                       LayerSpec::Init::he});
    const int out = cfg.anchors_per_location *
                    (std::string(head) == "cls_head" ? cfg.num_classes : 4);
    const auto init = std::string(head) == "cls_head" ? LayerSpec::Init::zero
                                                      : LayerSpec::Init::head;
    specs.push_back({std::string(head) + ".final", feat, out, 1, init});
  }
  return specs;
}

}  // namespace

ParamStore init_detector(const DetectorConfig& config,
                         const std::optional<ImbalanceStats>& stats, uint64_t seed,
                         double learning_rate) {
  config.validate();
  if (config.init_policy.kind == InitPolicyKind::optimal_bias && !stats.has_value())
    throw ConfigError("init_detector: optimal_bias requires imbalance stats");

  double cls_bias = 0.0;
  switch (config.init_policy.kind) {
    case InitPolicyKind::default_zero_bias:
      break;
    case InitPolicyKind::manual_pi:
      cls_bias = bias_for_pi(config.init_policy.pi);
      break;
    case InitPolicyKind::optimal_bias:
      cls_bias = optimal_bias(static_cast<double>(stats->n_total),
                              static_cast<double>(stats->nf_total),
                              static_cast<double>(config.num_classes))
                     .bias;
      break;
  }

  ParamStore store;
  store.learning_rate = learning_rate;
  const int k = config.kernel;
  uint64_t param_index = 0;
  for (const auto& spec : layer_specs(config)) {
    const int64_t wcount = static_cast<int64_t>(spec.out_ch) * spec.in_ch * k * k;
    std::vector<double> weights;
    switch (spec.init) {
      case LayerSpec::Init::he:
        weights = normal_init(wcount, std::sqrt(2.0 / (spec.in_ch * k * k)),
                              derive_seed(seed, 1000 + param_index));
        break;
      case LayerSpec::Init::head:
        weights = normal_init(wcount, config.head_weight_std,
                              derive_seed(seed, 1000 + param_index));
        break;
      case LayerSpec::Init::zero:
        weights.assign(static_cast<size_t>(wcount), 0.0);
        break;
    }
    ++param_index;
    store.add(spec.name + ".weight",
              Value::param({spec.out_ch, spec.in_ch, k, k}, std::move(weights)));
    const double bias = spec.init == LayerSpec::Init::zero ? cls_bias : 0.0;
    store.add(spec.name + ".bias",
              Value::param({spec.out_ch}, std::vector<double>(spec.out_ch, bias)));
  }
  return store;
}

DetectorOutput detector_forward(const ParamStore& store, const DetectorConfig& config,
                                const std::vector<double>& image) {
  const auto expected = static_cast<size_t>(config.input_height) * config.input_width;
  if (image.size() != expected)
    throw ShapeError("detector_forward: image has " + std::to_string(image.size()) +
                     " pixels, config expects " + std::to_string(expected));
  const int pad = (config.kernel - 1) / 2;
  Value x = Value::constant({1, config.input_height, config.input_width}, image);
  for (size_t i = 0; i < config.channels.size(); ++i) {
    const std::string base = "backbone." + std::to_string(i);
    x = relu(conv2d(x, store.at(base + ".weight"), store.at(base + ".bias"),
                    config.conv_strides[i], pad));
  }
  auto run_head = [&](const char* head, int channels_per_anchor) {
    Value h = x;
    for (int d = 0; d + 1 < config.head_depth; ++d) {
      const std::string base = std::string(head) + "." + std::to_string(d);
      h = relu(conv2d(h, store.at(base + ".weight"), store.at(base + ".bias"), 1, pad));
    }
    const std::string base = std::string(head) + ".final";
    h = conv2d(h, store.at(base + ".weight"), store.at(base + ".bias"), 1, pad);
    return head_to_anchor_layout(h, config.anchors_per_location, channels_per_anchor);
  };
  DetectorOutput out;
  out.cls_probs = sigmoid(run_head("cls_head", config.num_classes));
  out.reg_deltas = run_head("reg_head", 4);
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["config_digest"] = ckpt.config_digest;
  j["seed"] = ckpt.seed;
  j["detector"] = ckpt.detector;
  j["anchors"] = ckpt.anchors;
  j["stats"] = ckpt.stats;
  auto& params = j["params"] = nlohmann::json::object();
  for (const auto& [name, value] : ckpt.store.params) {
    params[name] = {{"shape", value.shape()}, {"data", value.data()}};
  }
  write_text_file(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  if (!file_exists(path)) throw DataError("no checkpoint at " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  ckpt.detector = j.at("detector").get<DetectorConfig>();
  ckpt.anchors = j.at("anchors").get<AnchorConfig>();
  ckpt.stats = j.at("stats").get<ImbalanceStats>();
  ckpt.seed = j.at("seed").get<uint64_t>();
  ckpt.config_digest = j.at("config_digest").get<std::string>();
  for (const auto& [name, jp] : j.at("params").items()) {
    Shape shape = jp.at("shape").get<Shape>();
    auto data = jp.at("data").get<std::vector<double>>();
    ckpt.store.add(name, Value::param(std::move(shape), std::move(data)));
  }
  return ckpt;
}

}  // namespace imblab
