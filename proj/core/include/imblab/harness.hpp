#pragma once

#include <string>

#include "imblab/experiment.hpp"

namespace imblab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDiverged = 3;  // train with --strict only

struct HarnessOptions {
  std::string out_dir = "out";
  bool force = false;
  bool strict = false;
  int parallel = 1;
};

std::string dataset_dir(const std::string& out_dir);
std::string run_dir_name(const ExperimentConfig& cfg);

// generate: dataset files under <out>/dataset; refuses to overwrite an
// existing dataset unless force is set.
int cmd_generate(const ExperimentConfig& cfg, const HarnessOptions& opts);

// Library-level train-with-artifacts, shared by the train and grid commands
// and by the acceptance suite: RunRecord CSV/JSON, checkpoint, loss-curve
// SVGs, all under run_dir.
struct TrainArtifacts {
  RunRecord record;
  ImbalanceStats stats;
  std::string run_dir;
  std::string checkpoint_path;
};

TrainArtifacts run_train_experiment(const ExperimentConfig& cfg, const std::string& run_dir,
                                    const LoadedDataset& dataset);

// train: requires the dataset to exist and match the config's dataset block.
int cmd_train(const ExperimentConfig& cfg, const HarnessOptions& opts);

// eval: loads a checkpoint, evaluates on the eval split at the configured
// threshold policy, and writes eval_report.json plus the threshold-sweep CSV
// next to the checkpoint.
int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
             const HarnessOptions& opts);

// grid: runs a (pi x w) grid or the six-way mechanism ablation, sharing the
// generated dataset; diverged cells are reported as "n/a" and the grid
// continues. Cells may run concurrently (opts.parallel).
int cmd_grid(const ExperimentConfig& base, const std::string& grid_spec_text,
             const HarnessOptions& opts);

// analyze: imbalance statistics, optimal bias, adaptive threshold, and the
// analytic initial-loss table; no training involved.
int cmd_analyze(const ExperimentConfig& cfg, const HarnessOptions& opts);

}  // namespace imblab
