#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "imblab/anchors.hpp"
#include "imblab/optim.hpp"
#include "imblab/tensor.hpp"

namespace imblab {

enum class InitPolicyKind { default_zero_bias, manual_pi, optimal_bias };

struct InitPolicy {
  InitPolicyKind kind = InitPolicyKind::default_zero_bias;
  double pi = 0.01;  // manual_pi only
};

// Minimal dense one-stage detector: a small conv backbone downsampling to a
// single detection level, plus sigmoid classification and box-delta heads.
struct DetectorConfig {
  std::vector<int> channels = {8, 16, 16};
  std::vector<int> conv_strides = {2, 2, 1};
  int head_depth = 1;  // convs per head including the final prediction conv
  int kernel = 3;
  int num_classes = 3;
  int anchors_per_location = 3;
  int input_height = 64;
  int input_width = 64;
  double head_weight_std = 0.01;
  InitPolicy init_policy;

  void validate() const;
  std::pair<int, int> feature_size() const;  // detection-level H, W
  int64_t anchor_capacity() const;           // feature H * W * anchors_per_location
};

// Builds the parameter store. Backbone and hidden head convs use a seeded
// He-normal init (std = sqrt(2 / fan_in)); the final regression conv uses
// normal(0, head_weight_std). The final classification conv has zero weights
// in every policy, so the first forward pass outputs exactly sigmoid(bias):
// bias 0, -log((1-pi)/pi), or the optimal bias from the imbalance stats.
ParamStore init_detector(const DetectorConfig& config,
                         const std::optional<ImbalanceStats>& stats, uint64_t seed,
                         double learning_rate);

struct DetectorOutput {
  Value cls_probs;   // [N, C], sigmoid activations
  Value reg_deltas;  // [N, 4]
};

// Fully differentiable forward pass for one scene image ([1,H,W] row-major).
// Anchor ordering matches AnchorSet: (y*W + x)*A + a.
DetectorOutput detector_forward(const ParamStore& store, const DetectorConfig& config,
                                const std::vector<double>& image);

// Checkpoint file: JSON manifest plus a flat array per named parameter
// (docs/schema.md). Carries everything cmd_eval needs without the training
// config: detector + anchor config and the training-split imbalance stats.
struct Checkpoint {
  DetectorConfig detector;
  AnchorConfig anchors;
  ImbalanceStats stats;
  uint64_t seed = 0;
  std::string config_digest;
  ParamStore store;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace imblab
