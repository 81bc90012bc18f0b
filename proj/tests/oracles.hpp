#pragma once

// Independent oracles for the test suites. These deliberately avoid the
// library's implementation paths: gradients come from central finite
// differences over rebuilt graphs, NMS/AP from brute-force selection scans,
// and the optimal initialization from a dense grid search.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "imblab/evaluator.hpp"
#include "imblab/geometry.hpp"
#include "imblab/scenes.hpp"

namespace oracles {

inline std::vector<double> fd_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double step = 1e-5) {
  std::vector<double> grad(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double hi = f(x);
    x[i] = saved - step;
    const double lo = f(x);
    x[i] = saved;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

// Worst-case per-component relative error, with an absolute floor so that
// near-zero components compare absolutely.
inline double max_rel_err(const std::vector<double>& got, const std::vector<double>& want,
                          double floor_scale = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max(std::fabs(want[i]), floor_scale);
    worst = std::max(worst, std::fabs(got[i] - want[i]) / denom);
  }
  return worst;
}

// Selection-scan NMS: repeatedly pick the best remaining detection and drop
// everything of the same class overlapping it. Same documented tie order as
// the implementation (score desc, label asc, anchor asc), different
// algorithm.
inline std::vector<imblab::Detection> brute_nms(std::vector<imblab::Detection> dets,
                                                double iou_threshold) {
  std::vector<char> alive(dets.size(), 1);
  std::vector<imblab::Detection> kept;
  for (;;) {
    int best = -1;
    for (size_t i = 0; i < dets.size(); ++i) {
      if (!alive[i]) continue;
      if (best < 0) {
        best = static_cast<int>(i);
        continue;
      }
      const auto& a = dets[i];
      const auto& b = dets[best];
      const bool better = a.score > b.score ||
                          (a.score == b.score &&
                           (a.label < b.label || (a.label == b.label && a.anchor < b.anchor)));
      if (better) best = static_cast<int>(i);
    }
    if (best < 0) break;
    alive[best] = 0;
    kept.push_back(dets[best]);
    for (size_t i = 0; i < dets.size(); ++i) {
      if (!alive[i] || dets[i].label != dets[best].label) continue;
      if (imblab::iou(dets[i].box, dets[best].box) > iou_threshold) alive[i] = 0;
    }
  }
  return kept;
}

// Independent PR/AP: greedy matching in the documented order, then the
// 101-point interpolation evaluated by direct max-scan over all PR points.
inline double brute_class_ap(std::vector<imblab::Detection> dets,
                             const std::vector<imblab::Scene>& scenes, int label,
                             double iou_threshold) {
  int64_t num_gt = 0;
  for (const auto& s : scenes)
    for (int l : s.gt_labels)
      if (l == label) ++num_gt;
  if (num_gt == 0) return 0.0;
  std::sort(dets.begin(), dets.end(),
            [](const imblab::Detection& a, const imblab::Detection& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
              return a.anchor < b.anchor;
            });
  std::map<int64_t, std::vector<char>> used;
  std::vector<double> precision, recall;
  int64_t tp = 0, fp = 0;
  for (const auto& det : dets) {
    const imblab::Scene* scene = nullptr;
    for (const auto& s : scenes)
      if (s.scene_id == det.scene_id) scene = &s;
    double best = 0.0;
    int64_t best_g = -1;
    if (scene) {
      auto& flags = used[det.scene_id];
      if (flags.size() != scene->gt_boxes.size()) flags.assign(scene->gt_boxes.size(), 0);
      for (size_t g = 0; g < scene->gt_boxes.size(); ++g) {
        if (scene->gt_labels[g] != label || flags[g]) continue;
        const double v = imblab::iou(det.box, scene->gt_boxes[g]);
        if (v > best) {
          best = v;
          best_g = static_cast<int64_t>(g);
        }
      }
      if (best >= iou_threshold && best_g >= 0) {
        flags[best_g] = 1;
        ++tp;
      } else {
        ++fp;
      }
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  double ap = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best_prec = 0.0;
    for (size_t i = 0; i < precision.size(); ++i)
      if (recall[i] >= r) best_prec = std::max(best_prec, precision[i]);
    ap += best_prec;
  }
  return ap / 101.0;
}

struct BruteApSummary {
  double mean_ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
};

inline BruteApSummary brute_evaluate(const std::vector<imblab::Detection>& dets,
                                     const std::vector<imblab::Scene>& scenes, int num_classes,
                                     const std::vector<double>& thresholds) {
  BruteApSummary out;
  int64_t classes_counted = 0;
  double sum = 0.0, sum50 = 0.0, sum75 = 0.0;
  for (int label = 1; label <= num_classes; ++label) {
    bool has_gt = false;
    for (const auto& s : scenes)
      for (int l : s.gt_labels)
        if (l == label) has_gt = true;
    if (!has_gt) continue;
    std::vector<imblab::Detection> class_dets;
    for (const auto& d : dets)
      if (d.label == label) class_dets.push_back(d);
    for (double t : thresholds) {
      const double ap = brute_class_ap(class_dets, scenes, label, t);
      sum += ap;
      if (t == 0.5) sum50 += ap;
      if (t == 0.75) sum75 += ap;
    }
    ++classes_counted;
  }
  if (classes_counted) {
    out.mean_ap = sum / static_cast<double>(classes_counted * thresholds.size());
    out.ap50 = sum50 / static_cast<double>(classes_counted);
    out.ap75 = sum75 / static_cast<double>(classes_counted);
  }
  return out;
}

// Dense grid search over pi in (0, 0.5) for the minimizer of the initial
// weighted CE (the formula is restated here on purpose).
inline double grid_search_optimal_pi(double n, double nf, double classes, int points) {
  const double k = n * classes / nf;
  double best_pi = 0.0, best_val = 0.0;
  bool first = true;
  for (int i = 1; i <= points; ++i) {
    const double pi = 0.5 * static_cast<double>(i) / (points + 1);
    const double val = -std::log(pi) - (k - 1.0) * std::log1p(-pi);
    if (first || val < best_val) {
      best_val = val;
      best_pi = pi;
      first = false;
    }
  }
  return best_pi;
}

inline double grid_step(int points) { return 0.5 / (points + 1); }

}  // namespace oracles
