#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "imblab/anchors.hpp"
#include "imblab/detector.hpp"
#include "imblab/scenes.hpp"

namespace imblab {

struct EvalConfig {
  enum class ThresholdPolicy { fixed, adaptive };
  ThresholdPolicy policy = ThresholdPolicy::fixed;
  double theta = 0.05;  // fixed policy only
  double nms_iou = 0.5;
  int max_detections = 100;  // per scene, across classes
  std::vector<double> ap_iou_thresholds = {0.5,  0.55, 0.6,  0.65, 0.7,
                                           0.75, 0.8,  0.85, 0.9,  0.95};
  // Fixed thresholds visited by the sweep command; an adaptive row is
  // appended when sweep_adaptive is set.
  std::vector<double> sweep_thetas = {0.0, 0.01, 0.05};
  bool sweep_adaptive = true;

  void validate() const;
  // Adaptive thresholding uses theta = N_f / N from the *training* split.
  double resolve_theta(const ImbalanceStats& train_stats) const;
};

struct Detection {
  int64_t scene_id = 0;
  int label = 0;  // 1..C
  double score = 0.0;
  Box box;
  int64_t anchor = -1;
};

// Keeps (anchor, class) pairs with score >= theta, decodes boxes by
// inverting the regression encoding, and clips to image bounds.
std::vector<Detection> decode_and_filter(const std::vector<double>& cls_probs,
                                         const std::vector<double>& reg_deltas,
                                         const AnchorSet& anchors, int num_classes,
                                         double theta, const Scene& scene);

// Greedy score-descending suppression, per class independently; ties broken
// by lowest (label, anchor). Input is one scene's detections.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

struct EvalReport {
  std::vector<double> iou_thresholds;
  std::map<int, std::vector<double>> per_class_ap;  // label -> AP per threshold
  std::vector<int> classes_without_gt;              // excluded from means
  double mean_ap = 0.0;  // averaged over classes and IoU thresholds
  double ap50 = 0.0;
  double ap75 = 0.0;
  int64_t detections_kept = 0;
  double theta_used = 0.0;
  double ms_per_scene = 0.0;  // timing; excluded from determinism guarantees
  int64_t scenes_evaluated = 0;
};

// COCO-style AP over a fixed detection list: score-descending greedy
// matching (each gt matched once), 101-point interpolated precision,
// averaged over classes present in the ground truth and over the IoU
// thresholds.
EvalReport ap_report(const std::vector<Detection>& detections,
                     const std::vector<Scene>& eval_scenes, int num_classes,
                     const std::vector<double>& iou_thresholds);

// Runs the detector over the eval split (decode, per-class NMS, per-scene
// detection cap) and computes the AP report.
EvalReport evaluate(const ParamStore& store, const DetectorConfig& det_cfg,
                    const AnchorSet& anchors, const std::vector<Scene>& eval_scenes,
                    const EvalConfig& config, double theta);

std::string eval_report_json(const EvalReport& report);

// One evaluation per threshold; "adaptive" rows resolve theta from the
// training-split stats.
struct SweepEntry {
  std::string policy;  // "fixed" or "adaptive"
  double theta = 0.0;  // resolved value (adaptive entries fill this in)
};

struct SweepRow {
  std::string policy;
  double theta = 0.0;
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  int64_t survivors = 0;
  double ms_per_scene = 0.0;
};

std::vector<SweepRow> threshold_sweep(const ParamStore& store, const DetectorConfig& det_cfg,
                                      const AnchorSet& anchors,
                                      const std::vector<Scene>& eval_scenes,
                                      const EvalConfig& config,
                                      const std::vector<SweepEntry>& entries,
                                      const ImbalanceStats& train_stats);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace imblab
