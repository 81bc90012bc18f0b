#include "imblab/anchors.hpp"

#include <algorithm>
#include <cmath>

#include "imblab/errors.hpp"

namespace imblab {

AnchorSet build_anchors(int height, int width, const AnchorConfig& config) {
  if (config.strides.empty() || config.scales.empty() || config.aspect_ratios.empty())
    throw ConfigError("build_anchors: strides/scales/aspect_ratios must be non-empty");
  if (config.fg_thresh < config.bg_thresh)
    throw ConfigError("build_anchors: fg_thresh must be >= bg_thresh");
  for (int s : config.strides) {
    if (s <= 0) throw ConfigError("build_anchors: strides must be positive");
    if (height < s || width < s)
      throw ConfigError("build_anchors: grid smaller than stride " + std::to_string(s));
  }
  AnchorSet set;
  set.strides = config.strides;
  set.scales = config.scales;
  set.aspect_ratios = config.aspect_ratios;
  for (int stride : config.strides) {
    const int gh = height / stride;
    const int gw = width / stride;
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const double cx = (gx + 0.5) * stride;
        const double cy = (gy + 0.5) * stride;
        for (double scale : config.scales)
          for (double ratio : config.aspect_ratios) {
            const double base = scale * stride;
            const double w = base / std::sqrt(ratio);
            const double h = base * std::sqrt(ratio);
            set.anchors.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
          }
      }
  }
  return set;
}

std::vector<int64_t> MatchResult::foreground_indices() const {
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(foreground));
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 1) out.push_back(static_cast<int64_t>(i));
  return out;
}

MatchResult match(const AnchorSet& anchors, const Scene& scene, double fg_thresh,
                  double bg_thresh) {
  if (fg_thresh < bg_thresh) throw ConfigError("match: fg_thresh must be >= bg_thresh");
  const int64_t n = anchors.total();
  const auto num_gt = static_cast<int64_t>(scene.gt_boxes.size());

  MatchResult result;
  result.total_anchors = n;
  result.labels.assign(static_cast<size_t>(n), 0);
  result.matched_gt.assign(static_cast<size_t>(n), -1);
  result.regression_targets.assign(static_cast<size_t>(n), {0, 0, 0, 0});
  if (num_gt == 0) return result;  // all background

  std::vector<double> best_gt_iou(static_cast<size_t>(num_gt), 0.0);
  std::vector<int64_t> best_gt_anchor(static_cast<size_t>(num_gt), -1);

  for (int64_t i = 0; i < n; ++i) {
    double best = 0.0;
    int64_t best_gt = -1;
    for (int64_t g = 0; g < num_gt; ++g) {
      const double v = iou(anchors.anchors[i], scene.gt_boxes[g]);
      if (v > best) {  // ties keep the lowest gt index
        best = v;
        best_gt = g;
      }
      // strictly-greater keeps the lowest anchor index on ties
      if (v > best_gt_iou[g]) {
        best_gt_iou[g] = v;
        best_gt_anchor[g] = i;
      }
    }
    if (best >= fg_thresh && best_gt >= 0) {
      result.labels[i] = scene.gt_labels[best_gt];
      result.matched_gt[i] = static_cast<int32_t>(best_gt);
    } else if (best >= bg_thresh) {
      result.labels[i] = -1;  // ignore band
    }  // else background (0)
  }

  // Force-match: each gt with positive best IoU claims its best anchor.
  // Anchor collisions between gts resolve to the higher IoU, then lower gt.
  std::vector<double> forced_iou(static_cast<size_t>(n), -1.0);
  for (int64_t g = 0; g < num_gt; ++g) {
    if (best_gt_anchor[g] < 0 || best_gt_iou[g] <= 0.0) continue;
    const int64_t i = best_gt_anchor[g];
    if (best_gt_iou[g] > forced_iou[i]) {
      forced_iou[i] = best_gt_iou[g];
      result.labels[i] = scene.gt_labels[g];
      result.matched_gt[i] = static_cast<int32_t>(g);
    }
  }

  for (int64_t i = 0; i < n; ++i) {
    if (result.labels[i] >= 1) {
      ++result.foreground;
      result.regression_targets[i] =
          encode_delta(anchors.anchors[i], scene.gt_boxes[result.matched_gt[i]]);
    } else if (result.labels[i] == -1) {
      ++result.ignored;
    }
  }
  return result;
}

ImbalanceStats imbalance_stats(const std::vector<Scene>& scenes, const AnchorSet& anchors,
                               double fg_thresh, double bg_thresh, bool count_ignore_in_n) {
  if (scenes.empty()) throw DataError("imbalance_stats: empty dataset");
  ImbalanceStats stats;
  for (const auto& scene : scenes) {
    const auto m = match(anchors, scene, fg_thresh, bg_thresh);
    stats.n_total += count_ignore_in_n ? m.total_anchors : (m.total_anchors - m.ignored);
    stats.nf_total += m.foreground;
  }
  if (stats.nf_total == 0)
    throw DataError("imbalance_stats: dataset has no foreground anchors; optimal bias undefined");
  stats.ratio = static_cast<double>(stats.n_total) / static_cast<double>(stats.nf_total);
  return stats;
}

}  // namespace imblab
