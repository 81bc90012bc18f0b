#include "imblab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "imblab/errors.hpp"
#include "imblab/io.hpp"
#include "imblab/log.hpp"
#include "imblab/svg.hpp"
#include "json_codec.hpp"

namespace imblab {

std::string dataset_dir(const std::string& out_dir) { return out_dir + "/dataset"; }

std::string run_dir_name(const ExperimentConfig& cfg) {
  return "run-" + cfg.digest().substr(0, 8) + "-seed" + std::to_string(cfg.seed);
}

namespace {

LoadedDataset load_matching_dataset(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto dir = dataset_dir(out_dir);
  if (!file_exists(dir + "/manifest.json"))
    throw ConfigError("no dataset at " + dir + "; run the generate command first");
  auto data = load_dataset(dir);
  const nlohmann::json want = cfg.dataset;
  const nlohmann::json have = data.spec;
  if (want != have)
    throw ConfigError("dataset at " + dir + " was generated from a different dataset block");
  return data;
}

void write_run_svgs(const std::string& run_dir, const RunRecord& record) {
  SvgSeries reg{"L_reg", {}};
  SvgSeries weighted{"w * L_cls", {}};
  SvgSeries raw{"L_cls (raw)", {}};
  for (const auto& row : record.rows) {
    if (row.skipped) continue;
    const auto t = static_cast<double>(row.t);
    reg.points.push_back({t, row.reg});
    weighted.points.push_back({t, row.cls_weighted});
    raw.points.push_back({t, row.cls_raw});
  }
  write_text_file(run_dir + "/loss_curves.svg",
                  svg_line_plot("regression vs weighted classification loss", "iteration",
                                "loss", {reg, weighted}));
  write_text_file(run_dir + "/cls_loss.svg",
                  svg_line_plot("raw classification loss", "iteration", "loss", {raw}));
}

}  // namespace

int cmd_generate(const ExperimentConfig& cfg, const HarnessOptions& opts) {
  const auto scenes = generate(cfg.dataset);
  save_dataset(dataset_dir(opts.out_dir), cfg.dataset, scenes, opts.force);
  save_experiment_config(opts.out_dir + "/config.json", cfg);
  std::cout << "generated " << scenes.size() << " scenes -> " << dataset_dir(opts.out_dir)
            << " (digest " << dataset_digest(cfg.dataset, scenes) << ")\n";
  return kExitOk;
}

TrainArtifacts run_train_experiment(const ExperimentConfig& cfg, const std::string& run_dir,
                                    const LoadedDataset& dataset) {
  auto [train_scenes, eval_scenes] = split(dataset.scenes, cfg.train_fraction);
  (void)eval_scenes;
  auto result = train(train_scenes, cfg.anchors, cfg.detector, cfg.loss, cfg.sampler,
                      cfg.schedule, cfg.seed, cfg.digest());
  TrainArtifacts artifacts;
  artifacts.record = std::move(result.record);
  artifacts.stats = result.stats;
  artifacts.run_dir = run_dir;
  ensure_dir(run_dir);
  save_run_record(run_dir, artifacts.record);
  write_run_svgs(run_dir, artifacts.record);

  Checkpoint ckpt;
  ckpt.detector = cfg.detector;
  ckpt.anchors = cfg.anchors;
  ckpt.stats = result.stats;
  ckpt.seed = cfg.seed;
  ckpt.config_digest = cfg.digest();
  ckpt.store = std::move(result.store);
  artifacts.checkpoint_path = run_dir + "/checkpoint.json";
  save_checkpoint(artifacts.checkpoint_path, ckpt);
  return artifacts;
}

int cmd_train(const ExperimentConfig& cfg, const HarnessOptions& opts) {
  const auto dataset = load_matching_dataset(cfg, opts.out_dir);
  const std::string run_dir = opts.out_dir + "/runs/" + run_dir_name(cfg);
  const auto artifacts = run_train_experiment(cfg, run_dir, dataset);
  const bool diverged = artifacts.record.status == RunStatus::diverged;
  std::cout << "train " << run_dir_name(cfg) << ": "
            << (diverged ? "diverged at t=" + std::to_string(artifacts.record.diverged_at)
                         : "completed " + std::to_string(artifacts.record.rows.size()) +
                               " iterations")
            << "; artifacts in " << run_dir << "\n";
  if (diverged && opts.strict) return kExitDiverged;
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
             const HarnessOptions& opts) {
  const auto ckpt = load_checkpoint(checkpoint_path);
  const auto dataset = load_matching_dataset(cfg, opts.out_dir);
  auto [train_scenes, eval_scenes] = split(dataset.scenes, cfg.train_fraction);
  (void)train_scenes;
  const AnchorSet anchors =
      build_anchors(ckpt.detector.input_height, ckpt.detector.input_width, ckpt.anchors);

  const double theta = cfg.eval.resolve_theta(ckpt.stats);
  const auto report =
      evaluate(ckpt.store, ckpt.detector, anchors, eval_scenes, cfg.eval, theta);

  std::string dir = checkpoint_path;
  const auto slash = dir.find_last_of('/');
  dir = slash == std::string::npos ? "." : dir.substr(0, slash);
  write_text_file(dir + "/eval_report.json", eval_report_json(report));

  std::vector<SweepEntry> entries;
  for (double t : cfg.eval.sweep_thetas) entries.push_back({"fixed", t});
  if (cfg.eval.sweep_adaptive) entries.push_back({"adaptive", 0.0});
  const auto sweep =
      threshold_sweep(ckpt.store, ckpt.detector, anchors, eval_scenes, cfg.eval, entries,
                      ckpt.stats);
  write_text_file(dir + "/sweep.csv", sweep_csv(sweep));

  std::cout << "eval: AP " << format_double(report.mean_ap * 100.0) << " AP50 "
            << format_double(report.ap50 * 100.0) << " AP75 "
            << format_double(report.ap75 * 100.0) << " (theta " << format_double(theta)
            << ", " << report.detections_kept << " detections) -> " << dir << "\n";
  return kExitOk;
}

namespace {

struct GridCell {
  std::string name;
  ExperimentConfig cfg;
  // results
  bool ran = false;
  bool diverged = false;
  bool flagged = false;
  double ap = 0.0, ap50 = 0.0, ap75 = 0.0;
  std::string error;
};

void run_cell(GridCell& cell, const LoadedDataset& dataset, const std::string& cells_dir) {
  try {
    const auto artifacts =
        run_train_experiment(cell.cfg, cells_dir + "/" + cell.name, dataset);
    cell.ran = true;
    cell.diverged = artifacts.record.status == RunStatus::diverged;
    cell.flagged = loss_balance_report(artifacts.record).any_flagged;
    if (!cell.diverged) {
      auto [train_scenes, eval_scenes] = split(dataset.scenes, cell.cfg.train_fraction);
      (void)train_scenes;
      const auto ckpt = load_checkpoint(artifacts.checkpoint_path);
      const AnchorSet anchors = build_anchors(ckpt.detector.input_height,
                                              ckpt.detector.input_width, ckpt.anchors);
      const double theta = cell.cfg.eval.resolve_theta(ckpt.stats);
      const auto report =
          evaluate(ckpt.store, ckpt.detector, anchors, eval_scenes, cell.cfg.eval, theta);
      write_text_file(cells_dir + "/" + cell.name + "/eval_report.json",
                      eval_report_json(report));
      cell.ap = report.mean_ap * 100.0;
      cell.ap50 = report.ap50 * 100.0;
      cell.ap75 = report.ap75 * 100.0;
    }
  } catch (const std::exception& e) {
    cell.ran = true;
    cell.diverged = true;
    cell.error = e.what();
    log_warn("grid cell " + cell.name + " failed: " + cell.error);
  }
}

std::string sanitize(std::string s) {
  for (auto& c : s)
    if (c == '.' || c == '+' || c == '-') c = '_';
  return s;
}

GridCell make_cell(std::string name, ExperimentConfig cfg) {
  GridCell cell;
  cell.name = std::move(name);
  cell.cfg = std::move(cfg);
  return cell;
}

ExperimentConfig ce_cell(const ExperimentConfig& base, const std::string& pi_label,
                         const std::string& w_label) {
  ExperimentConfig cfg = base;
  cfg.loss = LossConfig{};
  cfg.loss.variant = ClsVariant::cross_entropy;
  if (pi_label == "optimal") {
    cfg.loss.optimal_bias = true;
  } else {
    const double pi = parse_double(pi_label);
    // pi = 0.5 is exactly the zero-bias default
    if (pi != 0.5) cfg.loss.init_pi = pi;
  }
  if (w_label == "guided") {
    cfg.loss.guided = true;
  } else {
    const double w = parse_double(w_label);
    if (w != 1.0) cfg.loss.fixed_w = w;
  }
  resolve_experiment(cfg);
  return cfg;
}

ExperimentConfig ablation_cell(const ExperimentConfig& base, bool focal, bool bias, bool guided,
                               bool adaptive) {
  ExperimentConfig cfg = base;
  cfg.loss = LossConfig{};
  cfg.loss.variant = focal ? ClsVariant::focal : ClsVariant::cross_entropy;
  if (focal && !bias) cfg.loss.init_pi = 1e-2;  // Focal's own biased initialization
  cfg.loss.optimal_bias = bias;
  cfg.loss.guided = guided;
  cfg.eval.policy =
      adaptive ? EvalConfig::ThresholdPolicy::adaptive : EvalConfig::ThresholdPolicy::fixed;
  cfg.eval.theta = 0.05;
  resolve_experiment(cfg);
  return cfg;
}

}  // namespace

int cmd_grid(const ExperimentConfig& base, const std::string& grid_spec_text,
             const HarnessOptions& opts) {
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(grid_spec_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed grid spec: " + std::string(e.what()));
  }
  const std::string mode = spec.value("mode", "");

  // Grid cells share one dataset; generate it if absent.
  if (!file_exists(dataset_dir(opts.out_dir) + "/manifest.json")) {
    const auto scenes = generate(base.dataset);
    save_dataset(dataset_dir(opts.out_dir), base.dataset, scenes, false);
    log_info("grid: generated shared dataset");
  }
  const auto dataset = load_matching_dataset(base, opts.out_dir);
  const std::string cells_dir = opts.out_dir + "/grid/cells";

  std::vector<GridCell> cells;
  std::vector<std::string> pi_labels, w_labels;
  if (mode == "pi_w") {
    for (const auto& p : spec.value("pi", nlohmann::json::array()))
      pi_labels.push_back(p.is_string() ? p.get<std::string>()
                                        : format_double(p.get<double>()));
    for (const auto& w : spec.value("w", nlohmann::json::array()))
      w_labels.push_back(w.is_string() ? w.get<std::string>()
                                       : format_double(w.get<double>()));
    if (pi_labels.empty() || w_labels.empty())
      throw ConfigError("grid spec: pi and w lists must be non-empty");
    for (const auto& p : pi_labels)
      for (const auto& w : w_labels)
        cells.push_back(make_cell("pi" + sanitize(p) + "_w" + sanitize(w), ce_cell(base, p, w)));
  } else if (mode == "ablation") {
    // Mechanism toggles: focal baseline; each partial combination; full
    // Sampling-Free; the hybrid with Focal loss.
    cells.push_back(make_cell("focal_baseline", ablation_cell(base, true, false, false, false)));
    cells.push_back(make_cell("guided_only", ablation_cell(base, false, false, true, true)));
    cells.push_back(make_cell("bias_only", ablation_cell(base, false, true, false, true)));
    cells.push_back(make_cell("guided_bias", ablation_cell(base, false, true, true, false)));
    cells.push_back(make_cell("sampling_free", ablation_cell(base, false, true, true, true)));
    cells.push_back(make_cell("sampling_free_focal", ablation_cell(base, true, true, true, true)));
  } else {
    throw ConfigError("grid spec: mode must be 'pi_w' or 'ablation'");
  }

  const int workers = std::max(1, std::min<int>(opts.parallel, static_cast<int>(cells.size())));
  if (workers <= 1) {
    for (auto& cell : cells) run_cell(cell, dataset, cells_dir);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int i = 0; i < workers; ++i)
      pool.emplace_back([&] {
        for (size_t k = next.fetch_add(1); k < cells.size(); k = next.fetch_add(1))
          run_cell(cells[k], dataset, cells_dir);
      });
    for (auto& t : pool) t.join();
  }

  ensure_dir(opts.out_dir + "/grid");
  if (mode == "pi_w") {
    std::vector<CsvRow> rows;
    CsvRow header{"pi\\w"};
    for (const auto& w : w_labels) header.push_back(w);
    rows.push_back(header);
    size_t idx = 0;
    for (const auto& p : pi_labels) {
      CsvRow row{p};
      for (size_t wi = 0; wi < w_labels.size(); ++wi, ++idx)
        row.push_back(cells[idx].diverged ? "n/a" : format_double(cells[idx].ap));
      rows.push_back(row);
    }
    write_csv(opts.out_dir + "/grid/grid.csv", rows);
    std::cout << "grid: wrote " << opts.out_dir << "/grid/grid.csv\n";
  } else {
    std::vector<CsvRow> rows;
    rows.push_back({"cell", "status", "flagged_unstable", "ap", "ap50", "ap75"});
    for (const auto& cell : cells)
      rows.push_back({cell.name, cell.diverged ? "n/a" : "completed",
                      cell.flagged ? "1" : "0",
                      cell.diverged ? "n/a" : format_double(cell.ap),
                      cell.diverged ? "n/a" : format_double(cell.ap50),
                      cell.diverged ? "n/a" : format_double(cell.ap75)});
    write_csv(opts.out_dir + "/grid/ablation.csv", rows);
    std::cout << "grid: wrote " << opts.out_dir << "/grid/ablation.csv\n";
  }
  return kExitOk;
}

int cmd_analyze(const ExperimentConfig& cfg, const HarnessOptions& opts) {
  const auto dataset = load_matching_dataset(cfg, opts.out_dir);
  auto [train_scenes, eval_scenes] = split(dataset.scenes, cfg.train_fraction);
  (void)eval_scenes;
  const AnchorSet anchors = build_anchors(cfg.dataset.height, cfg.dataset.width, cfg.anchors);
  const auto stats_incl = imbalance_stats(train_scenes, anchors, cfg.anchors.fg_thresh,
                                          cfg.anchors.bg_thresh, true);
  const auto stats_excl = imbalance_stats(train_scenes, anchors, cfg.anchors.fg_thresh,
                                          cfg.anchors.bg_thresh, false);
  const auto& stats = cfg.anchors.count_ignore_in_n ? stats_incl : stats_excl;
  const auto opt = optimal_bias(static_cast<double>(stats.n_total),
                                static_cast<double>(stats.nf_total),
                                static_cast<double>(cfg.dataset.num_classes));

  nlohmann::json j;
  j["schema_version"] = 1;
  j["config_digest"] = cfg.digest();
  j["stats_ignore_included"] = stats_incl;
  j["stats_ignore_excluded"] = stats_excl;
  j["optimal_pi"] = opt.pi;
  j["optimal_bias"] = opt.bias;
  j["adaptive_theta_ignore_included"] = stats_incl.adaptive_theta();
  j["adaptive_theta_ignore_excluded"] = stats_excl.adaptive_theta();
  auto& table = j["initial_loss_table"] = nlohmann::json::array();

  std::cout << "anchors per scene: " << anchors.total() << "\n"
            << "train split: N=" << stats.n_total << " N_f=" << stats.nf_total
            << " N/N_f=" << format_double(stats.ratio)
            << " (ignore excluded: N=" << stats_excl.n_total
            << ", N/N_f=" << format_double(stats_excl.ratio) << ")\n"
            << "optimal pi=" << format_double(opt.pi)
            << " bias=" << format_double(opt.bias) << "\n"
            << "adaptive theta=" << format_double(stats.adaptive_theta()) << "\n"
            << "initial-loss table:\n";
  for (const auto& row : cfg.analyze_rows) {
    const double ratio = row.ratio.value_or(stats.ratio);
    const double classes = row.classes.value_or(static_cast<double>(cfg.dataset.num_classes));
    const double value =
        row.variant == "focal"
            ? initial_focal_loss_analytic(row.alpha, row.gamma, row.pi, ratio, classes)
            : initial_weighted_ce_analytic(row.w, row.pi, ratio, classes);
    nlohmann::json jr = {{"variant", row.variant}, {"alpha", row.alpha},
                         {"gamma", row.gamma},     {"w", row.w},
                         {"pi", row.pi},           {"ratio", ratio},
                         {"classes", classes},     {"value", value}};
    table.push_back(jr);
    std::cout << "  " << row.variant << " alpha=" << format_double(row.alpha)
              << " gamma=" << format_double(row.gamma) << " w=" << format_double(row.w)
              << " pi=" << format_double(row.pi) << " ratio=" << format_double(ratio)
              << " C=" << format_double(classes) << " -> " << format_double(value) << "\n";
  }
  ensure_dir(opts.out_dir);
  write_text_file(opts.out_dir + "/analysis.json", j.dump(2) + "\n");
  std::cout << "analysis -> " << opts.out_dir << "/analysis.json\n";
  return kExitOk;
}

}  // namespace imblab
