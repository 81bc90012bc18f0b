#include "imblab/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "imblab/errors.hpp"
#include "imblab/io.hpp"
#include "json_codec.hpp"

namespace imblab {

namespace {
// RetinaNet-style smooth-L1 width; the mostly-L1 regime keeps the regression
// loss informative as a guide instead of decaying quadratically.
constexpr double kSmoothL1Beta = 1.0 / 9.0;
}

void Schedule::validate() const {
  if (iterations < 1) throw ConfigError("Schedule: iterations must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("Schedule: learning_rate must be positive");
  if (batch_scenes < 1) throw ConfigError("Schedule: batch_scenes must be >= 1");
}

std::vector<int64_t> pick_batch(Rng& rng, int64_t num_scenes, int batch_scenes) {
  const auto k = std::min<int64_t>(batch_scenes, num_scenes);
  std::vector<int64_t> ids;
  ids.reserve(static_cast<size_t>(k));
  while (static_cast<int64_t>(ids.size()) < k) {
    const int64_t candidate = rng.uniform_int(0, num_scenes - 1);
    if (std::find(ids.begin(), ids.end(), candidate) == ids.end()) ids.push_back(candidate);
  }
  return ids;
}

namespace {

// Per-anchor CE values (sum over classes), detached from the graph, for
// OHEM's hardness ranking.
std::vector<double> per_anchor_ce(const std::vector<double>& probs, int64_t num_classes,
                                  const std::vector<int>& labels,
                                  const std::vector<int64_t>& candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (int64_t i : candidates) {
    double loss = 0.0;
    for (int64_t j = 0; j < num_classes; ++j) {
      const double p = probs[i * num_classes + j];
      if (labels[i] == j + 1)
        loss -= std::log(std::max(p, kLogGuardEps));
      else
        loss -= std::log(std::max(1.0 - p, kLogGuardEps));
    }
    out.push_back(loss);
  }
  return out;
}

}  // namespace

BatchLosses build_batch_losses(const ParamStore& store, const DetectorConfig& det_cfg,
                               std::span<const Scene> scenes,
                               std::span<const MatchResult> matches,
                               std::span<const int64_t> batch_ids, const LossConfig& loss_cfg,
                               const SamplerConfig& sampler_cfg, Rng& sampler_rng,
                               GhmcState& ghm_state) {
  const int64_t n_per_scene = det_cfg.anchor_capacity();
  std::vector<Value> prob_parts;
  std::vector<Value> reg_parts;
  std::vector<double> target_flat;
  std::vector<int> labels;
  std::vector<int64_t> subset;
  BatchLosses out;

  for (size_t slot = 0; slot < batch_ids.size(); ++slot) {
    const auto sid = static_cast<size_t>(batch_ids[slot]);
    const Scene& scene = scenes[sid];
    const MatchResult& m = matches[sid];
    const int64_t offset = static_cast<int64_t>(slot) * n_per_scene;

    auto fwd = detector_forward(store, det_cfg, scene.image);
    prob_parts.push_back(fwd.cls_probs);
    labels.insert(labels.end(), m.labels.begin(), m.labels.end());
    out.batch_foreground += m.foreground;
    out.batch_anchors_counted += m.total_anchors - m.ignored;

    const auto fg = m.foreground_indices();
    if (!fg.empty()) {
      reg_parts.push_back(gather_rows(fwd.reg_deltas, fg));
      for (int64_t i : fg)
        for (double d : m.regression_targets[i]) target_flat.push_back(d);
    }

    switch (sampler_cfg.strategy) {
      case SamplerConfig::Strategy::none:
        break;
      case SamplerConfig::Strategy::biased: {
        for (int64_t i :
             biased_sample(m, sampler_cfg.batch_size, sampler_cfg.fg_fraction, sampler_rng))
          subset.push_back(offset + i);
        break;
      }
      case SamplerConfig::Strategy::ohem: {
        std::vector<int64_t> candidates;
        for (size_t i = 0; i < m.labels.size(); ++i)
          if (m.labels[i] != -1) candidates.push_back(static_cast<int64_t>(i));
        const auto losses = per_anchor_ce(fwd.cls_probs.data(), det_cfg.num_classes,
                                          m.labels, candidates);
        for (int64_t pos : ohem_select(losses, sampler_cfg.top_k))
          subset.push_back(offset + candidates[pos]);
        break;
      }
    }
  }

  out.cls_batch = ClsBatch::make(concat_rows(prob_parts), std::move(labels));
  out.subset = std::move(subset);
  if (out.cls_batch.foreground == 0) return out;  // caller logs a skip

  switch (loss_cfg.variant) {
    case ClsVariant::cross_entropy:
      out.cls_raw = ce_loss(out.cls_batch, out.subset);
      break;
    case ClsVariant::focal:
      out.cls_raw = focal_loss(out.cls_batch, loss_cfg.focal.alpha, loss_cfg.focal.gamma,
                               out.subset);
      break;
    case ClsVariant::ghmc:
      out.cls_raw = ghmc_loss(out.cls_batch, loss_cfg.ghmc, ghm_state, out.subset);
      break;
  }

  Value reg_pred = concat_rows(reg_parts);
  const int64_t nf = reg_pred.shape()[0];
  Value reg_target = Value::constant({nf, 4}, std::move(target_flat));
  out.reg = smooth_l1_reg_loss(reg_pred, reg_target, kSmoothL1Beta);
  return out;
}

namespace {

double resolved_initial_pi(const DetectorConfig& det_cfg, const ImbalanceStats& stats) {
  switch (det_cfg.init_policy.kind) {
    case InitPolicyKind::default_zero_bias: return 0.5;
    case InitPolicyKind::manual_pi: return det_cfg.init_policy.pi;
    case InitPolicyKind::optimal_bias:
      return optimal_bias(static_cast<double>(stats.n_total),
                          static_cast<double>(stats.nf_total),
                          static_cast<double>(det_cfg.num_classes))
          .pi;
  }
  return 0.5;
}

InitLossCheck initial_loss_check(const LossConfig& loss_cfg, const BatchLosses& batch,
                                 double pi, double dataset_ratio, double num_classes) {
  InitLossCheck check;
  // Measured value is the unsampled classification loss on the full batch.
  const double batch_ratio = static_cast<double>(batch.batch_anchors_counted) /
                             static_cast<double>(batch.batch_foreground);
  if (loss_cfg.variant == ClsVariant::focal) {
    check.measured =
        focal_loss(batch.cls_batch, loss_cfg.focal.alpha, loss_cfg.focal.gamma).item();
    check.analytic_dataset_ratio = initial_focal_loss_analytic(
        loss_cfg.focal.alpha, loss_cfg.focal.gamma, pi, dataset_ratio, num_classes);
    check.analytic_batch_ratio = initial_focal_loss_analytic(
        loss_cfg.focal.alpha, loss_cfg.focal.gamma, pi, batch_ratio, num_classes);
  } else {
    check.measured = ce_loss(batch.cls_batch).item();
    check.analytic_dataset_ratio =
        initial_weighted_ce_analytic(1.0, pi, dataset_ratio, num_classes);
    check.analytic_batch_ratio =
        initial_weighted_ce_analytic(1.0, pi, batch_ratio, num_classes);
  }
  check.rel_err_dataset =
      std::fabs(check.measured - check.analytic_dataset_ratio) / check.analytic_dataset_ratio;
  check.rel_err_batch =
      std::fabs(check.measured - check.analytic_batch_ratio) / check.analytic_batch_ratio;
  return check;
}

}  // namespace

TrainOutput train(const std::vector<Scene>& train_scenes, const AnchorConfig& anchor_cfg,
                  const DetectorConfig& det_cfg, const LossConfig& loss_cfg,
                  const SamplerConfig& sampler_cfg, const Schedule& schedule, uint64_t seed,
                  const std::string& config_digest) {
  det_cfg.validate();
  loss_cfg.validate();
  sampler_cfg.validate();
  schedule.validate();
  if (train_scenes.empty()) throw DataError("train: empty dataset");
  for (const auto& s : train_scenes)
    if (s.height != det_cfg.input_height || s.width != det_cfg.input_width)
      throw ConfigError("train: scene size does not match detector input size");

  const AnchorSet anchors =
      build_anchors(det_cfg.input_height, det_cfg.input_width, anchor_cfg);
  if (anchors.total() != det_cfg.anchor_capacity())
    throw ConfigError("train: anchor set size " + std::to_string(anchors.total()) +
                      " does not match detector capacity " +
                      std::to_string(det_cfg.anchor_capacity()));

  std::vector<MatchResult> matches;
  matches.reserve(train_scenes.size());
  int64_t n_incl = 0, n_excl = 0, nf = 0;
  for (const auto& scene : train_scenes) {
    matches.push_back(match(anchors, scene, anchor_cfg.fg_thresh, anchor_cfg.bg_thresh));
    const auto& m = matches.back();
    n_incl += m.total_anchors;
    n_excl += m.total_anchors - m.ignored;
    nf += m.foreground;
  }
  if (nf == 0) throw DataError("train: dataset has no foreground anchors");

  TrainOutput out;
  auto& record = out.record;
  record.config_digest = config_digest;
  record.seed = seed;
  record.stats = {anchor_cfg.count_ignore_in_n ? n_incl : n_excl, nf, 0.0};
  record.stats.ratio =
      static_cast<double>(record.stats.n_total) / static_cast<double>(nf);
  record.stats_ignore_excluded = {n_excl, nf,
                                  static_cast<double>(n_excl) / static_cast<double>(nf)};
  out.stats = record.stats;

  const std::optional<ImbalanceStats> stats_opt = record.stats;
  out.store = init_detector(det_cfg, stats_opt, seed, schedule.learning_rate);
  record.initial_pi = resolved_initial_pi(det_cfg, record.stats);

  Rng batch_rng(derive_seed(seed, kBatchRngStream));
  Rng sampler_rng(sampler_cfg.seed != 0 ? sampler_cfg.seed
                                        : derive_seed(seed, kSamplerRngStream));
  GhmcState ghm_state;

  const auto n_scenes = static_cast<int64_t>(train_scenes.size());
  for (int64_t t = 0; t < schedule.iterations; ++t) {
    const auto batch_ids = pick_batch(batch_rng, n_scenes, schedule.batch_scenes);
    IterationRow row;
    row.t = t;
    row.learning_rate = schedule.learning_rate;
    try {
      auto batch = build_batch_losses(out.store, det_cfg, train_scenes, matches, batch_ids,
                                      loss_cfg, sampler_cfg, sampler_rng, ghm_state);
      if (batch.cls_batch.foreground == 0) {
        row.skipped = true;
        record.rows.push_back(row);
        out.store.tick();
        continue;
      }
      if (t == 0 && loss_cfg.variant != ClsVariant::ghmc)
        record.init_check = initial_loss_check(loss_cfg, batch, record.initial_pi,
                                               record.stats.ratio, det_cfg.num_classes);

      auto total = total_loss(batch.cls_raw, batch.reg, loss_cfg);
      backward(total.value);
      sgd_step(out.store);

      row.cls_raw = batch.cls_raw.item();
      row.cls_weighted = total.weighted_cls.item();
      row.reg = batch.reg.item();
      row.effective_w = total.effective_weight;
      record.rows.push_back(row);
    } catch (const DivergenceSignal& e) {
      record.status = RunStatus::diverged;
      record.diverged_at = t;
      record.divergence_reason = e.what();
      break;
    }
  }
  return out;
}

BalanceReport loss_balance_report(const RunRecord& record, int window, double lo, double hi) {
  BalanceReport report;
  if (window < 1) throw ConfigError("loss_balance_report: window must be >= 1");
  const auto n = static_cast<int64_t>(record.rows.size());
  for (int64_t begin = 0; begin < n; begin += window) {
    const int64_t end = std::min<int64_t>(begin + window, n);
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t i = begin; i < end; ++i) {
      const auto& row = record.rows[i];
      if (row.skipped) continue;
      sum += row.reg / std::max(row.cls_weighted, 1e-300);
      ++count;
    }
    if (count == 0) continue;
    BalanceWindow w;
    w.t_begin = record.rows[begin].t;
    w.t_end = record.rows[end - 1].t + 1;
    w.mean_ratio = sum / static_cast<double>(count);
    w.flagged = !(w.mean_ratio >= lo && w.mean_ratio <= hi);
    report.any_flagged = report.any_flagged || w.flagged;
    report.windows.push_back(w);
  }
  return report;
}

std::string run_record_csv(const RunRecord& record) {
  std::vector<CsvRow> rows;
  rows.push_back({"t", "cls_raw", "cls_weighted", "reg", "w", "lr", "skipped"});
  for (const auto& r : record.rows)
    rows.push_back({std::to_string(r.t), format_double(r.cls_raw),
                    format_double(r.cls_weighted), format_double(r.reg),
                    format_double(r.effective_w), format_double(r.learning_rate),
                    r.skipped ? "1" : "0"});
  return csv_format(rows);
}

std::string run_record_header_json(const RunRecord& record) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["config_digest"] = record.config_digest;
  j["seed"] = record.seed;
  j["status"] = record.status == RunStatus::completed ? "completed" : "diverged";
  j["diverged_at"] = record.diverged_at;
  j["divergence_reason"] = record.divergence_reason;
  j["iterations_logged"] = record.rows.size();
  j["stats"] = record.stats;
  j["stats_ignore_excluded"] = record.stats_ignore_excluded;
  j["initial_pi"] = record.initial_pi;
  if (record.init_check) {
    const auto& c = *record.init_check;
    j["init_check"] = {{"measured", c.measured},
                       {"analytic_dataset_ratio", c.analytic_dataset_ratio},
                       {"analytic_batch_ratio", c.analytic_batch_ratio},
                       {"rel_err_dataset", c.rel_err_dataset},
                       {"rel_err_batch", c.rel_err_batch}};
  }
  return j.dump(2) + "\n";
}

void save_run_record(const std::string& dir, const RunRecord& record) {
  ensure_dir(dir);
  write_text_file(dir + "/run_record.csv", run_record_csv(record));
  write_text_file(dir + "/run_record.json", run_record_header_json(record));
}

}  // namespace imblab
