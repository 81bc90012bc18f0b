#include "imblab/losses.hpp"

#include <algorithm>
#include <cmath>

#include "imblab/errors.hpp"

namespace imblab {

void LossConfig::validate() const {
  if (guided && fixed_w.has_value())
    throw ConfigError("LossConfig: guided and fixed_w are mutually exclusive");
  if (optimal_bias && init_pi.has_value())
    throw ConfigError("LossConfig: optimal_bias and init_pi are mutually exclusive");
  if (fixed_w && !(*fixed_w > 0.0)) throw ConfigError("LossConfig: fixed_w must be positive");
  if (!(stage_factor > 0.0)) throw ConfigError("LossConfig: stage_factor must be positive");
  if (init_pi && !(*init_pi > 0.0 && *init_pi < 1.0))
    throw ConfigError("LossConfig: init_pi must be in (0,1)");
  if (variant == ClsVariant::focal) {
    if (!(focal.alpha > 0.0 && focal.alpha < 1.0))
      throw ConfigError("LossConfig: focal alpha must be in (0,1)");
    if (focal.gamma < 0.0) throw ConfigError("LossConfig: focal gamma must be >= 0");
  }
  if (variant == ClsVariant::ghmc) {
    if (ghmc.bins < 1) throw ConfigError("LossConfig: ghmc bins must be >= 1");
    if (!(ghmc.momentum >= 0.0 && ghmc.momentum < 1.0))
      throw ConfigError("LossConfig: ghmc momentum must be in [0,1)");
  }
}

ClsBatch ClsBatch::make(Value probs, std::vector<int> labels) {
  if (!probs.defined() || probs.shape().size() != 2)
    throw ShapeError("ClsBatch: probs must be [N,C]");
  const int64_t n = probs.shape()[0];
  const auto c = probs.shape()[1];
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("ClsBatch: labels size " + std::to_string(labels.size()) +
                     " != N = " + std::to_string(n));
  ClsBatch batch;
  batch.foreground = 0;
  for (int y : labels) {
    if (y < -1 || y > c)
      throw DataError("ClsBatch: label " + std::to_string(y) + " outside {-1,0,..," +
                      std::to_string(c) + "}");
    if (y >= 1) ++batch.foreground;
  }
  batch.probs = std::move(probs);
  batch.labels = std::move(labels);
  return batch;
}

namespace {

struct Selection {
  std::vector<int64_t> anchors;  // non-ignore anchors in the sum
  int64_t foreground = 0;
  double normalizer = 0.0;
};

Selection select(const ClsBatch& batch, std::span<const int64_t> subset, const char* op) {
  const int64_t n = static_cast<int64_t>(batch.labels.size());
  Selection sel;
  if (subset.empty()) {
    for (int64_t i = 0; i < n; ++i)
      if (batch.labels[i] != -1) sel.anchors.push_back(i);
    sel.foreground = batch.foreground;
    if (sel.foreground == 0)
      throw DataError(std::string(op) + ": batch has no foreground anchors (N_f = 0)");
    sel.normalizer = static_cast<double>(sel.foreground);
  } else {
    for (int64_t i : subset) {
      if (i < 0 || i >= n)
        throw ShapeError(std::string(op) + ": subset index out of range");
      if (batch.labels[i] == -1) continue;  // ignore-labeled anchors never contribute
      sel.anchors.push_back(i);
      if (batch.labels[i] >= 1) ++sel.foreground;
    }
    // Loss on a sampled subset normalizes by the foreground count inside the
    // subset, floored at 1.
    sel.normalizer = static_cast<double>(std::max<int64_t>(1, sel.foreground));
  }
  if (sel.anchors.empty()) throw DataError(std::string(op) + ": empty anchor selection");
  return sel;
}

}  // namespace

Value ce_loss(const ClsBatch& batch, std::span<const int64_t> subset) {
  const auto sel = select(batch, subset, "ce_loss");
  const int64_t c = batch.num_classes();
  const size_t units = batch.probs.numel();
  std::vector<double> mask_fg(units, 0.0), mask_bg(units, 0.0);
  for (int64_t i : sel.anchors) {
    const int y = batch.labels[i];
    for (int64_t j = 0; j < c; ++j) {
      if (y == j + 1) mask_fg[i * c + j] = 1.0;
      else mask_bg[i * c + j] = 1.0;
    }
  }
  const auto& p = batch.probs;
  Value one_minus_p = sub(Value::ones(p.shape()), p);
  Value inner = add(mul(Value::constant(p.shape(), std::move(mask_fg)), log_guarded(p)),
                    mul(Value::constant(p.shape(), std::move(mask_bg)), log_guarded(one_minus_p)));
  return mul(Value::scalar(-1.0 / sel.normalizer), sum(inner));
}

Value focal_loss(const ClsBatch& batch, double alpha, double gamma,
                 std::span<const int64_t> subset) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("focal_loss: alpha must be in (0,1)");
  if (gamma < 0.0) throw ConfigError("focal_loss: gamma must be >= 0");
  const auto sel = select(batch, subset, "focal_loss");
  const int64_t c = batch.num_classes();
  const size_t units = batch.probs.numel();
  std::vector<double> mask_fg(units, 0.0), mask_bg(units, 0.0);
  for (int64_t i : sel.anchors) {
    const int y = batch.labels[i];
    for (int64_t j = 0; j < c; ++j) {
      if (y == j + 1) mask_fg[i * c + j] = alpha;
      else mask_bg[i * c + j] = 1.0 - alpha;
    }
  }
  const auto& p = batch.probs;
  Value one_minus_p = sub(Value::ones(p.shape()), p);
  Value fg_term = mul(Value::constant(p.shape(), std::move(mask_fg)),
                      mul(power(one_minus_p, gamma), log_guarded(p)));
  Value bg_term = mul(Value::constant(p.shape(), std::move(mask_bg)),
                      mul(power(p, gamma), log_guarded(one_minus_p)));
  return mul(Value::scalar(-1.0 / sel.normalizer), sum(add(fg_term, bg_term)));
}

Value ghmc_loss(const ClsBatch& batch, const GhmcParams& params, GhmcState& state,
                std::span<const int64_t> subset) {
  if (params.bins < 1) throw ConfigError("ghmc_loss: bins must be >= 1");
  if (!(params.momentum >= 0.0 && params.momentum < 1.0))
    throw ConfigError("ghmc_loss: momentum must be in [0,1)");
  const auto sel = select(batch, subset, "ghmc_loss");
  const int64_t c = batch.num_classes();
  const int m = params.bins;
  const auto& pd = batch.probs.data();

  // Gradient norm g = |p - target| per unit, histogram over m bins.
  std::vector<double> counts(static_cast<size_t>(m), 0.0);
  auto bin_of = [m](double g) {
    int b = static_cast<int>(g * m);
    return std::clamp(b, 0, m - 1);
  };
  for (int64_t i : sel.anchors) {
    const int y = batch.labels[i];
    for (int64_t j = 0; j < c; ++j) {
      const double target = (y == j + 1) ? 1.0 : 0.0;
      counts[bin_of(std::fabs(pd[i * c + j] - target))] += 1.0;
    }
  }
  int occupied = 0;
  for (double v : counts)
    if (v > 0.0) ++occupied;

  if (state.acc.empty()) state.acc.assign(static_cast<size_t>(m), 0.0);
  if (static_cast<int>(state.acc.size()) != m)
    throw ConfigError("ghmc_loss: bin count changed mid-stream");
  if (!state.initialized) {
    state.acc = counts;  // seed the EMA so momentum has a fixed point from batch one
    state.initialized = true;
  } else if (params.momentum > 0.0) {
    for (int b = 0; b < m; ++b)
      state.acc[b] = params.momentum * state.acc[b] + (1.0 - params.momentum) * counts[b];
  } else {
    state.acc = counts;
  }
  const auto& density = (params.momentum > 0.0) ? state.acc : counts;

  const double tot_units = static_cast<double>(sel.anchors.size()) * static_cast<double>(c);
  const size_t units = batch.probs.numel();
  std::vector<double> w_fg(units, 0.0), w_bg(units, 0.0);
  for (int64_t i : sel.anchors) {
    const int y = batch.labels[i];
    for (int64_t j = 0; j < c; ++j) {
      const double target = (y == j + 1) ? 1.0 : 0.0;
      const int b = bin_of(std::fabs(pd[i * c + j] - target));
      const double w = tot_units / (density[b] * occupied);
      if (target == 1.0) w_fg[i * c + j] = w;
      else w_bg[i * c + j] = w;
    }
  }
  const double normalizer =
      params.normalize_by_foreground ? std::max<double>(1.0, sel.foreground) : tot_units;
  const auto& p = batch.probs;
  Value one_minus_p = sub(Value::ones(p.shape()), p);
  Value inner = add(mul(Value::constant(p.shape(), std::move(w_fg)), log_guarded(p)),
                    mul(Value::constant(p.shape(), std::move(w_bg)), log_guarded(one_minus_p)));
  return mul(Value::scalar(-1.0 / normalizer), sum(inner));
}

Value smooth_l1_reg_loss(const Value& pred_deltas, const Value& target_deltas, double beta) {
  if (!(beta > 0.0)) throw ConfigError("smooth_l1_reg_loss: beta must be positive");
  if (pred_deltas.shape().size() != 2 || pred_deltas.shape() != target_deltas.shape())
    throw ShapeError("smooth_l1_reg_loss: pred and target must have matching [K,D] shapes");
  const int64_t k = pred_deltas.shape()[0];
  if (k < 1) throw DataError("smooth_l1_reg_loss: no foreground anchors");
  const double inv_k = 1.0 / static_cast<double>(k);
  const auto& pv = pred_deltas.data();
  const auto& tv = target_deltas.data();
  double total = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    const double ad = std::fabs(d);
    total += ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
  }
  return detail::make_node(
      {1}, {total * inv_k}, {pred_deltas, target_deltas},
      [beta, inv_k](detail::Node& self) {
        detail::Node& pred = *self.parents[0];
        detail::Node& target = *self.parents[1];
        const double g = self.grad[0] * inv_k;
        for (size_t i = 0; i < pred.data.size(); ++i) {
          const double d = pred.data[i] - target.data[i];
          const double dh =
              std::fabs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
          if (pred.requires_grad) pred.grad[i] += g * dh;
          if (target.requires_grad) target.grad[i] -= g * dh;
        }
      },
      "smooth_l1");
}

GuidedScaled guided_scale(const Value& cls_loss, const Value& reg_loss, double stage_factor) {
  if (!(stage_factor > 0.0)) throw ConfigError("guided_scale: stage_factor must be positive");
  const double lc = cls_loss.item();
  const double lr = reg_loss.item();
  if (!std::isfinite(lc) || !std::isfinite(lr))
    throw DivergenceSignal("guided_scale: non-finite loss value");
  if (!(lc > 0.0))
    throw DivergenceSignal("guided_scale: classification loss must be positive, got " +
                           std::to_string(lc));
  // w is computed outside the gradient graph. The node's value is written as
  // stage_factor * L_reg directly so the identity value(w * L_cls) ==
  // stage_factor * value(L_reg) holds exactly, not just up to rounding.
  const double w = stage_factor * lr / lc;
  Value scaled = detail::make_node(
      {1}, {stage_factor * lr}, {cls_loss},
      [w](detail::Node& self) {
        detail::Node& cls = *self.parents[0];
        if (cls.requires_grad) cls.grad[0] += self.grad[0] * w;
      },
      "guided_scale");
  return {scaled, w};
}

TotalLoss total_loss(const Value& cls_loss, const Value& reg_loss, const LossConfig& config) {
  config.validate();
  const double lc = cls_loss.item();
  const double lr = reg_loss.item();
  if (!std::isfinite(lc) || !std::isfinite(lr))
    throw DivergenceSignal("total_loss: non-finite loss (cls=" + std::to_string(lc) +
                           ", reg=" + std::to_string(lr) + ")");
  TotalLoss out;
  if (config.guided) {
    auto gs = guided_scale(cls_loss, reg_loss, config.stage_factor);
    out.weighted_cls = gs.value;
    out.effective_weight = gs.weight;
  } else {
    const double w = config.fixed_w.value_or(1.0);
    out.weighted_cls = (w == 1.0) ? cls_loss : mul(Value::scalar(w), cls_loss);
    out.effective_weight = w;
  }
  out.value = add(reg_loss, out.weighted_cls);
  const double total = out.value.item();
  if (!std::isfinite(total) || total > kDivergenceLossLimit)
    throw DivergenceSignal("total_loss: loss " + std::to_string(total) +
                           " exceeds divergence limit");
  return out;
}

double initial_focal_loss_analytic(double alpha, double gamma, double pi, double ratio,
                                   double num_classes) {
  const double background_units = ratio * num_classes - 1.0;
  return -alpha * std::pow(1.0 - pi, gamma) * std::log(pi) -
         (1.0 - alpha) * std::pow(pi, gamma) * background_units * std::log1p(-pi);
}

double initial_weighted_ce_analytic(double w, double pi, double ratio, double num_classes) {
  const double background_units = ratio * num_classes - 1.0;
  return w * (-std::log(pi) - background_units * std::log1p(-pi));
}

double bias_for_pi(double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw ConfigError("bias_for_pi: pi must be in (0,1)");
  return -std::log((1.0 - pi) / pi);
}

OptimalBias optimal_bias(double n_total, double nf_total, double num_classes) {
  if (!(nf_total > 0.0))
    throw DataError("optimal_bias: undefined for N_f = 0");
  const double nc = n_total * num_classes;
  if (!(nf_total < nc))
    throw DataError("optimal_bias: requires N_f < N*C");
  const double pi = nf_total / nc;
  const double bias = -std::log(nc / nf_total - 1.0);
  return {pi, bias};
}

}  // namespace imblab
