#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "imblab/geometry.hpp"
#include "imblab/scenes.hpp"

namespace imblab {

struct AnchorConfig {
  std::vector<int> strides = {4};
  std::vector<double> scales = {2.0, 3.0, 4.5};  // anchor side = scale * stride (times ratio)
  std::vector<double> aspect_ratios = {1.0};     // height / width
  double fg_thresh = 0.5;
  double bg_thresh = 0.4;
  // Whether anchors in the ignore band count toward N in the imbalance
  // statistics (pi, theta). Both interpretations are supported; default
  // counts every predefined anchor.
  bool count_ignore_in_n = true;
};

// Dense anchor grid. Ordering: stride level, then row-major grid location,
// then shape index a = scale_index * |ratios| + ratio_index. Anchors may
// extend beyond image bounds.
struct AnchorSet {
  std::vector<Box> anchors;
  std::vector<int> strides;
  std::vector<double> scales;
  std::vector<double> aspect_ratios;

  int64_t total() const { return static_cast<int64_t>(anchors.size()); }
  int shapes_per_location() const {
    return static_cast<int>(scales.size() * aspect_ratios.size());
  }
};

AnchorSet build_anchors(int height, int width, const AnchorConfig& config);

// Per-anchor assignment. labels: -1 ignore, 0 background, 1..C foreground
// class. regression_targets are valid only for foreground anchors.
struct MatchResult {
  std::vector<int> labels;
  std::vector<int32_t> matched_gt;  // -1 when not foreground
  std::vector<std::array<double, 4>> regression_targets;
  int64_t total_anchors = 0;
  int64_t foreground = 0;
  int64_t ignored = 0;

  std::vector<int64_t> foreground_indices() const;
};

// max-IoU assignment with RetinaNet-style thresholds plus force-matching:
// every gt's single best anchor (ties broken by lowest anchor index) is
// foreground even below fg_thresh, provided its IoU is positive. If two gts
// claim the same anchor the higher IoU wins, ties by lower gt index.
MatchResult match(const AnchorSet& anchors, const Scene& scene, double fg_thresh,
                  double bg_thresh);

struct ImbalanceStats {
  int64_t n_total = 0;     // anchors counted toward N (see count_ignore_in_n)
  int64_t nf_total = 0;    // foreground anchors
  double ratio = 0.0;      // N / N_f
  double adaptive_theta() const {
    return static_cast<double>(nf_total) / static_cast<double>(n_total);
  }
};

// Sums over all scenes in deterministic scene order. Errors if the dataset
// yields no foreground anchors (optimal bias undefined).
ImbalanceStats imbalance_stats(const std::vector<Scene>& scenes, const AnchorSet& anchors,
                               double fg_thresh, double bg_thresh, bool count_ignore_in_n);

}  // namespace imblab
