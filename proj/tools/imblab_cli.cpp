// Command-line harness for the imbalance laboratory: dataset generation,
// training runs, evaluation with threshold sweeps, (pi, w) / ablation grids,
// and training-free analysis of the imbalance statistics.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "imblab/errors.hpp"
#include "imblab/harness.hpp"
#include "imblab/io.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string preset;
  std::string out_dir = "out";
  std::optional<uint64_t> seed;
  bool force = false;
  bool strict = false;
  int parallel = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_force = false,
                bool with_strict = false, bool with_parallel = false) {
  cmd->add_option("--config", args.config_path, "experiment config JSON (see docs/schema.md)");
  cmd->add_option("--preset", args.preset, "built-in preset name (imb-std)");
  cmd->add_option("--out", args.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", args.seed, "override the experiment seed");
  if (with_force) cmd->add_flag("--force", args.force, "overwrite existing outputs");
  if (with_strict)
    cmd->add_flag("--strict", args.strict, "exit 3 when the training run diverges");
  if (with_parallel)
    cmd->add_option("--parallel", args.parallel, "concurrent grid cells")
        ->capture_default_str();
}

imblab::ExperimentConfig resolve_config(const CommonArgs& args) {
  if (!args.config_path.empty() && !args.preset.empty())
    throw imblab::ConfigError("pass either --config or --preset, not both");
  imblab::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = imblab::load_experiment_config(args.config_path);
  else if (!args.preset.empty()) cfg = imblab::preset_by_name(args.preset);
  else throw imblab::ConfigError("a config is required: --config PATH or --preset NAME");
  if (args.seed) {
    cfg.seed = *args.seed;
    imblab::resolve_experiment(cfg);
  }
  return cfg;
}

imblab::HarnessOptions harness_options(const CommonArgs& args) {
  imblab::HarnessOptions opts;
  opts.out_dir = args.out_dir;
  opts.force = args.force;
  opts.strict = args.strict;
  opts.parallel = args.parallel;
  return opts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"imblab: sampling heuristics vs sampling-free training on a toy dense detector"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, grid_args, analyze_args;
  std::string checkpoint_path, grid_spec_path;

  auto* cmd_gen = app.add_subcommand("generate", "generate the synthetic dataset");
  add_common(cmd_gen, gen_args, /*force=*/true);

  auto* cmd_tr = app.add_subcommand("train", "train one configuration");
  add_common(cmd_tr, train_args, /*force=*/false, /*strict=*/true);

  auto* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint on the eval split");
  add_common(cmd_ev, eval_args);
  cmd_ev->add_option("--checkpoint", checkpoint_path, "checkpoint.json from a training run")
      ->required();

  auto* cmd_gr = app.add_subcommand("grid", "run a (pi, w) grid or the mechanism ablation");
  add_common(cmd_gr, grid_args, /*force=*/true, /*strict=*/false, /*parallel=*/true);
  cmd_gr->add_option("--grid", grid_spec_path, "grid spec JSON")->required();

  auto* cmd_an = app.add_subcommand("analyze", "imbalance stats and analytic initial losses");
  add_common(cmd_an, analyze_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gen->parsed())
      return imblab::cmd_generate(resolve_config(gen_args), harness_options(gen_args));
    if (cmd_tr->parsed())
      return imblab::cmd_train(resolve_config(train_args), harness_options(train_args));
    if (cmd_ev->parsed())
      return imblab::cmd_eval(resolve_config(eval_args), checkpoint_path,
                              harness_options(eval_args));
    if (cmd_gr->parsed())
      return imblab::cmd_grid(resolve_config(grid_args),
                              imblab::read_text_file(grid_spec_path),
                              harness_options(grid_args));
    if (cmd_an->parsed())
      return imblab::cmd_analyze(resolve_config(analyze_args), harness_options(analyze_args));
  } catch (const imblab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return imblab::kExitConfigError;
  } catch (const imblab::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return imblab::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
