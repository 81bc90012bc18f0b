#pragma once

#include <optional>
#include <string>
#include <vector>

#include "imblab/anchors.hpp"
#include "imblab/detector.hpp"
#include "imblab/evaluator.hpp"
#include "imblab/losses.hpp"
#include "imblab/samplers.hpp"
#include "imblab/scenes.hpp"
#include "imblab/trainer.hpp"

namespace imblab {

// Row of the analytic initial-loss table printed by the analyze command.
// Ratio/classes default to the dataset's measured values when unset.
struct AnalyzeRow {
  std::string variant = "focal";  // "focal" or "ce"
  double alpha = 0.25;
  double gamma = 2.0;
  double w = 1.0;
  double pi = 0.01;
  std::optional<double> ratio;
  std::optional<double> classes;
};

// One experiment: dataset, anchors, detector, loss, sampler, schedule, eval.
// Serialized as a single JSON file with a schema_version field; the digest is
// over the resolved canonical form, so it is stable under field reordering.
struct ExperimentConfig {
  int schema_version = 1;
  DatasetSpec dataset;
  double train_fraction = 5.0 / 6.0;
  AnchorConfig anchors;
  DetectorConfig detector;
  LossConfig loss;
  SamplerConfig sampler;
  Schedule schedule;
  EvalConfig eval;
  std::vector<AnalyzeRow> analyze_rows;
  uint64_t seed = 1;

  void validate() const;
  std::string digest() const;
  std::string canonical_json() const;
};

// Fills the detector fields that are derived from other blocks: input size
// and class count from the dataset, anchors per location from the anchor
// shapes, and the bias-init policy from the loss block (optimal_bias /
// init_pi / zero bias).
void resolve_experiment(ExperimentConfig& cfg);

ExperimentConfig experiment_from_json_text(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const std::string& path, const ExperimentConfig& cfg);

// The pinned toy benchmark: 64x64 scenes, 3 texture-coded classes, 500/100
// split, stride-4 anchor grid whose mean N/N_f sits in the hundreds.
ExperimentConfig imb_std_preset();

// Named preset lookup ("imb-std"); throws ConfigError for unknown names.
ExperimentConfig preset_by_name(const std::string& name);

}  // namespace imblab
