#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imblab/anchors.hpp"
#include "imblab/detector.hpp"
#include "imblab/losses.hpp"
#include "imblab/optim.hpp"
#include "imblab/samplers.hpp"
#include "imblab/scenes.hpp"

namespace imblab {

struct Schedule {
  int64_t iterations = 2000;
  double learning_rate = 0.01;
  int batch_scenes = 4;

  void validate() const;
};

struct IterationRow {
  int64_t t = 0;
  double cls_raw = 0.0;       // classification loss before weighting
  double cls_weighted = 0.0;  // w * L_cls as entered into the total
  double reg = 0.0;
  double effective_w = 0.0;
  double learning_rate = 0.0;
  bool skipped = false;  // batch had no foreground anchors
};

// Measured-vs-analytic classification loss at t = 0 (CE and Focal variants).
// The batch-ratio form plugs the first batch's own counts into the closed
// form and should match the measurement almost exactly; the dataset-ratio
// form uses the training-split mean ratio.
struct InitLossCheck {
  double measured = 0.0;
  double analytic_dataset_ratio = 0.0;
  double analytic_batch_ratio = 0.0;
  double rel_err_dataset = 0.0;
  double rel_err_batch = 0.0;
};

enum class RunStatus { completed, diverged };

struct RunRecord {
  std::vector<IterationRow> rows;
  RunStatus status = RunStatus::completed;
  int64_t diverged_at = -1;
  std::string divergence_reason;
  std::string config_digest;
  uint64_t seed = 0;
  ImbalanceStats stats;                   // per the configured N convention
  ImbalanceStats stats_ignore_excluded;   // the alternative N convention
  double initial_pi = 0.0;                // sigmoid of the initial cls bias
  std::optional<InitLossCheck> init_check;
};

struct TrainOutput {
  ParamStore store;
  RunRecord record;
  ImbalanceStats stats;
};

// Rng stream tags under the experiment seed.
inline constexpr uint64_t kBatchRngStream = 11;
inline constexpr uint64_t kSamplerRngStream = 12;

// Distinct scene indices for one iteration (order as drawn).
std::vector<int64_t> pick_batch(Rng& rng, int64_t num_scenes, int batch_scenes);

// One mini-batch's loss graph: forward every batch scene, concatenate
// classification units, apply the configured sampler subset, and build the
// classification + regression losses. Exposed so tests can drive separate
// backward passes through the exact training graph.
struct BatchLosses {
  Value cls_raw;
  Value reg;
  ClsBatch cls_batch;
  std::vector<int64_t> subset;  // empty when no sampler
  int64_t batch_foreground = 0;
  int64_t batch_anchors_counted = 0;  // non-ignore anchors in the batch
};

BatchLosses build_batch_losses(const ParamStore& store, const DetectorConfig& det_cfg,
                               std::span<const Scene> scenes,
                               std::span<const MatchResult> matches,
                               std::span<const int64_t> batch_ids, const LossConfig& loss_cfg,
                               const SamplerConfig& sampler_cfg, Rng& sampler_rng,
                               GhmcState& ghm_state);

// The training loop: forward -> (optional sampling) -> classification loss
// per variant -> regression loss -> total -> backward -> SGD step, logging
// every iteration. Divergence is terminal and captured in the RunRecord; no
// exception escapes for it. Fully deterministic under a fixed seed.
TrainOutput train(const std::vector<Scene>& train_scenes, const AnchorConfig& anchor_cfg,
                  const DetectorConfig& det_cfg, const LossConfig& loss_cfg,
                  const SamplerConfig& sampler_cfg, const Schedule& schedule, uint64_t seed,
                  const std::string& config_digest = "");

// Windowed balance between the regression loss and the weighted
// classification loss; windows whose mean ratio leaves [lo, hi] are flagged
// as imbalanced training.
struct BalanceWindow {
  int64_t t_begin = 0;
  int64_t t_end = 0;  // exclusive
  double mean_ratio = 0.0;
  bool flagged = false;
};

struct BalanceReport {
  std::vector<BalanceWindow> windows;
  bool any_flagged = false;
};

BalanceReport loss_balance_report(const RunRecord& record, int window = 50, double lo = 0.2,
                                  double hi = 5.0);

// RunRecord files: one CSV row per iteration plus a JSON header
// (docs/schema.md). Neither contains timing, so reruns are byte-identical.
std::string run_record_csv(const RunRecord& record);
std::string run_record_header_json(const RunRecord& record);
void save_run_record(const std::string& dir, const RunRecord& record);

}  // namespace imblab
