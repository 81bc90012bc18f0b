#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "imblab/tensor.hpp"

namespace imblab {

// Training aborts when any loss goes non-finite or the total exceeds this.
inline constexpr double kDivergenceLossLimit = 1e4;

enum class ClsVariant { cross_entropy, focal, ghmc };

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

struct GhmcParams {
  int bins = 30;
  double momentum = 0.75;
  // Default divides by the number of (anchor, class) units as in the GHM
  // reference; switching normalizes by the foreground count instead, for
  // curves directly comparable with the CE loss.
  bool normalize_by_foreground = false;
};

struct LossConfig {
  ClsVariant variant = ClsVariant::cross_entropy;
  FocalParams focal;
  GhmcParams ghmc;
  std::optional<double> fixed_w;  // constant classification weight
  bool guided = false;            // guided loss scaling (dynamic w)
  double stage_factor = 1.0;      // multiplies the guided w (2.0 for RoI-style heads)
  std::optional<double> init_pi;  // manual biased initialization
  bool optimal_bias = false;      // data-driven pi = N_f / (N*C)

  void validate() const;  // guided/fixed_w and init_pi/optimal_bias are exclusive
};

// Post-sigmoid classification scores for one mini-batch of anchors.
// labels: -1 ignore, 0 background, 1..C foreground class.
struct ClsBatch {
  Value probs;  // [N, C]
  std::vector<int> labels;
  int64_t foreground = 0;  // count(labels >= 1)

  static ClsBatch make(Value probs, std::vector<int> labels);
  int64_t num_classes() const { return probs.shape()[1]; }
};

// Sigmoid cross-entropy over (anchor, class) units, normalized by the
// foreground count. Anchors labeled ignore are excluded from the sum. When
// `subset` is non-empty the sum runs over those anchors only and the
// normalizer is the foreground count inside the subset (floor 1).
Value ce_loss(const ClsBatch& batch, std::span<const int64_t> subset = {});

// Focal loss with soft-sampling hyper-parameters alpha/gamma; reduces to
// alpha * ce_loss when gamma == 0.
Value focal_loss(const ClsBatch& batch, double alpha, double gamma,
                 std::span<const int64_t> subset = {});

// Running gradient-density state for GHM-C, owned by the training loop.
// First batch seeds the EMA with its raw bin counts.
struct GhmcState {
  bool initialized = false;
  std::vector<double> acc;
};

// Gradient harmonizing classification loss: units are histogram-binned by
// gradient norm |p - target| and weighted inversely to their bin density.
Value ghmc_loss(const ClsBatch& batch, const GhmcParams& params, GhmcState& state,
                std::span<const int64_t> subset = {});

// Smooth-L1 over foreground box deltas: mean over anchors of the sum over
// the 4 coordinates of 0.5*d^2/beta (|d| < beta) else |d| - 0.5*beta.
Value smooth_l1_reg_loss(const Value& pred_deltas, const Value& target_deltas,
                         double beta = 1.0);

// Guided loss scaling: the scaled classification loss w * L_cls with
// w = stop_gradient(stage_factor * L_reg / L_cls). The node's value is
// exactly stage_factor * value(L_reg); its gradient is the frozen w times
// the unscaled classification gradient.
struct GuidedScaled {
  Value value;
  double weight;  // the frozen w actually applied
};
GuidedScaled guided_scale(const Value& cls_loss, const Value& reg_loss, double stage_factor);

// L_reg + w * L_cls, where w comes from fixed_w, guided scaling, or 1.
// Raises DivergenceSignal on non-finite losses or total above
// kDivergenceLossLimit.
struct TotalLoss {
  Value value;
  Value weighted_cls;
  double effective_weight = 1.0;
};
TotalLoss total_loss(const Value& cls_loss, const Value& reg_loss, const LossConfig& config);

// Closed-form value of the initial Focal loss under p = pi everywhere:
//   -alpha*(1-pi)^gamma*log(pi) - (1-alpha)*pi^gamma*(ratio*C - 1)*log(1-pi)
// with ratio = N/N_f.
double initial_focal_loss_analytic(double alpha, double gamma, double pi, double ratio,
                                   double num_classes);

// Closed-form value of the initial weighted CE under p = pi everywhere:
//   -w*log(pi) - w*(ratio*C - 1)*log(1-pi).
double initial_weighted_ce_analytic(double w, double pi, double ratio, double num_classes);

// Bias that makes sigmoid output pi: b = -log((1-pi)/pi).
double bias_for_pi(double pi);

// Optimal initialization: pi = N_f/(N*C) minimizes the initial CE loss;
// b = -log(N*C/N_f - 1) realizes it through the sigmoid.
struct OptimalBias {
  double pi;
  double bias;
};
OptimalBias optimal_bias(double n_total, double nf_total, double num_classes);

}  // namespace imblab
