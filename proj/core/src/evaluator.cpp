#include "imblab/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "imblab/errors.hpp"
#include "imblab/io.hpp"
#include "imblab/log.hpp"
#include "json_codec.hpp"

namespace imblab {

void EvalConfig::validate() const {
  if (policy == ThresholdPolicy::fixed && !(theta >= 0.0 && theta < 1.0))
    throw ConfigError("EvalConfig: theta must be in [0,1)");
  if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw ConfigError("EvalConfig: nms_iou must be in (0,1)");
  if (max_detections < 1) throw ConfigError("EvalConfig: max_detections must be >= 1");
  if (ap_iou_thresholds.empty()) throw ConfigError("EvalConfig: ap_iou_thresholds empty");
  for (double t : ap_iou_thresholds)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("EvalConfig: AP IoU thresholds must be in (0,1)");
}

double EvalConfig::resolve_theta(const ImbalanceStats& train_stats) const {
  if (policy == ThresholdPolicy::fixed) return theta;
  return train_stats.adaptive_theta();
}

std::vector<Detection> decode_and_filter(const std::vector<double>& cls_probs,
                                         const std::vector<double>& reg_deltas,
                                         const AnchorSet& anchors, int num_classes,
                                         double theta, const Scene& scene) {
  if (!(theta >= 0.0 && theta < 1.0)) throw ConfigError("decode_and_filter: theta must be in [0,1)");
  const int64_t n = anchors.total();
  if (static_cast<int64_t>(cls_probs.size()) != n * num_classes ||
      static_cast<int64_t>(reg_deltas.size()) != n * 4)
    throw ShapeError("decode_and_filter: output sizes do not match anchor set");
  std::vector<Detection> out;
  for (int64_t i = 0; i < n; ++i) {
    Box decoded;
    bool have_box = false;
    for (int j = 0; j < num_classes; ++j) {
      const double score = cls_probs[i * num_classes + j];
      if (score < theta) continue;
      if (!have_box) {
        const std::array<double, 4> delta = {reg_deltas[i * 4 + 0], reg_deltas[i * 4 + 1],
                                             reg_deltas[i * 4 + 2], reg_deltas[i * 4 + 3]};
        decoded = clip_box(decode_delta(anchors.anchors[i], delta),
                           static_cast<double>(scene.width), static_cast<double>(scene.height));
        have_box = true;
      }
      out.push_back({scene.scene_id, j + 1, score, decoded, i});
    }
  }
  return out;
}

namespace {

bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.label != b.label) return a.label < b.label;
  return a.anchor < b.anchor;
}

}  // namespace

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  std::sort(detections.begin(), detections.end(), detection_order);
  std::vector<Detection> kept;
  std::vector<char> suppressed(detections.size(), 0);
  for (size_t i = 0; i < detections.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(detections[i]);
    for (size_t j = i + 1; j < detections.size(); ++j) {
      if (suppressed[j] || detections[j].label != detections[i].label) continue;
      if (iou(detections[j].box, detections[i].box) > iou_threshold) suppressed[j] = 1;
    }
  }
  return kept;
}

namespace {

// AP for one class at one IoU threshold: greedy matching in score order
// (each gt at most once; the highest-IoU available gt wins, ties by lower gt
// index), then 101-point interpolated precision.
double average_precision(const std::vector<Detection>& dets_sorted,
                         const std::vector<const Scene*>& scenes_by_id,
                         double iou_threshold, int label, int64_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::map<int64_t, std::vector<char>> used;  // scene_id -> gt matched flags
  std::vector<char> is_tp;
  is_tp.reserve(dets_sorted.size());
  for (const auto& det : dets_sorted) {
    const Scene* scene = scenes_by_id[det.scene_id];
    double best = 0.0;
    int64_t best_gt = -1;
    auto& used_flags = used[det.scene_id];
    if (used_flags.empty()) used_flags.assign(scene->gt_boxes.size(), 0);
    for (size_t g = 0; g < scene->gt_boxes.size(); ++g) {
      if (scene->gt_labels[g] != label || used_flags[g]) continue;
      const double v = iou(det.box, scene->gt_boxes[g]);
      if (v > best) {
        best = v;
        best_gt = static_cast<int64_t>(g);
      }
    }
    if (best >= iou_threshold && best_gt >= 0) {
      used_flags[best_gt] = 1;
      is_tp.push_back(1);
    } else {
      is_tp.push_back(0);
    }
  }
  // Precision as a function of recall, then interpolate at 101 points.
  std::vector<double> precision, recall;
  int64_t tp = 0, fp = 0;
  for (char flag : is_tp) {
    if (flag) ++tp;
    else ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  // Running max from the right: p_interp(r) = max precision at recall >= r.
  for (auto i = static_cast<int64_t>(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  size_t idx = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    while (idx < recall.size() && recall[idx] < r) ++idx;
    ap += idx < precision.size() ? precision[idx] : 0.0;
  }
  return ap / 101.0;
}

}  // namespace

EvalReport ap_report(const std::vector<Detection>& detections,
                     const std::vector<Scene>& eval_scenes, int num_classes,
                     const std::vector<double>& iou_thresholds) {
  if (eval_scenes.empty()) throw DataError("ap_report: empty eval split");
  int64_t max_scene_id = 0;
  for (const auto& scene : eval_scenes)
    max_scene_id = std::max(max_scene_id, scene.scene_id);
  std::vector<const Scene*> scenes_by_id(static_cast<size_t>(max_scene_id) + 1, nullptr);
  for (const auto& scene : eval_scenes) scenes_by_id[scene.scene_id] = &scene;

  EvalReport report;
  report.iou_thresholds = iou_thresholds;
  report.detections_kept = static_cast<int64_t>(detections.size());
  report.scenes_evaluated = static_cast<int64_t>(eval_scenes.size());

  std::map<int, int64_t> gt_counts;
  for (const auto& scene : eval_scenes)
    for (int label : scene.gt_labels) ++gt_counts[label];

  double ap_sum = 0.0, ap50_sum = 0.0, ap75_sum = 0.0;
  int64_t classes_counted = 0;
  for (int label = 1; label <= num_classes; ++label) {
    if (gt_counts.find(label) == gt_counts.end()) {
      report.classes_without_gt.push_back(label);
      log_info("evaluate: class " + std::to_string(label) +
               " absent from ground truth; excluded from the mean");
      continue;
    }
    std::vector<Detection> dets;
    for (const auto& d : detections)
      if (d.label == label) dets.push_back(d);
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
      return a.anchor < b.anchor;
    });
    auto& per_class = report.per_class_ap[label];
    for (double t : iou_thresholds) {
      per_class.push_back(average_precision(dets, scenes_by_id, t, label, gt_counts[label]));
      ap_sum += per_class.back();
      if (t == 0.5) ap50_sum += per_class.back();
      if (t == 0.75) ap75_sum += per_class.back();
    }
    ++classes_counted;
  }
  if (classes_counted > 0) {
    report.mean_ap =
        ap_sum / static_cast<double>(classes_counted * iou_thresholds.size());
    report.ap50 = ap50_sum / static_cast<double>(classes_counted);
    report.ap75 = ap75_sum / static_cast<double>(classes_counted);
  }
  return report;
}

EvalReport evaluate(const ParamStore& store, const DetectorConfig& det_cfg,
                    const AnchorSet& anchors, const std::vector<Scene>& eval_scenes,
                    const EvalConfig& config, double theta) {
  config.validate();
  if (eval_scenes.empty()) throw DataError("evaluate: empty eval split");
  if (anchors.total() != det_cfg.anchor_capacity())
    throw ConfigError("evaluate: anchor set does not match detector capacity");

  const auto start = std::chrono::steady_clock::now();
  std::vector<Detection> all;
  for (const auto& scene : eval_scenes) {
    const auto fwd = detector_forward(store, det_cfg, scene.image);
    auto dets = decode_and_filter(fwd.cls_probs.data(), fwd.reg_deltas.data(), anchors,
                                  det_cfg.num_classes, theta, scene);
    dets = nms(std::move(dets), config.nms_iou);
    if (static_cast<int>(dets.size()) > config.max_detections) {
      std::sort(dets.begin(), dets.end(), detection_order);
      dets.resize(static_cast<size_t>(config.max_detections));
    }
    all.insert(all.end(), dets.begin(), dets.end());
  }
  const auto elapsed =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start);

  EvalReport report =
      ap_report(all, eval_scenes, det_cfg.num_classes, config.ap_iou_thresholds);
  report.theta_used = theta;
  report.ms_per_scene = elapsed.count() / static_cast<double>(eval_scenes.size());
  return report;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["iou_thresholds"] = report.iou_thresholds;
  j["mean_ap"] = report.mean_ap;
  j["ap50"] = report.ap50;
  j["ap75"] = report.ap75;
  j["detections_kept"] = report.detections_kept;
  j["theta_used"] = report.theta_used;
  j["scenes_evaluated"] = report.scenes_evaluated;
  j["classes_without_gt"] = report.classes_without_gt;
  auto& per_class = j["per_class_ap"] = nlohmann::json::object();
  for (const auto& [label, aps] : report.per_class_ap)
    per_class[std::to_string(label)] = aps;
  // Timing lives in its own object so determinism checks can mask it.
  j["timing"] = {{"ms_per_scene", report.ms_per_scene}};
  return j.dump(2) + "\n";
}

std::vector<SweepRow> threshold_sweep(const ParamStore& store, const DetectorConfig& det_cfg,
                                      const AnchorSet& anchors,
                                      const std::vector<Scene>& eval_scenes,
                                      const EvalConfig& config,
                                      const std::vector<SweepEntry>& entries,
                                      const ImbalanceStats& train_stats) {
  std::vector<SweepRow> rows;
  for (const auto& entry : entries) {
    const double theta =
        entry.policy == "adaptive" ? train_stats.adaptive_theta() : entry.theta;
    const auto report = evaluate(store, det_cfg, anchors, eval_scenes, config, theta);
    SweepRow row;
    row.policy = entry.policy;
    row.theta = theta;
    row.ap = report.mean_ap;
    row.ap50 = report.ap50;
    row.ap75 = report.ap75;
    row.survivors = report.detections_kept;
    row.ms_per_scene = report.ms_per_scene;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::vector<CsvRow> csv;
  csv.push_back({"policy", "theta", "ap", "ap50", "ap75", "survivors", "ms_per_scene"});
  for (const auto& r : rows)
    csv.push_back({r.policy, format_double(r.theta), format_double(r.ap),
                   format_double(r.ap50), format_double(r.ap75), std::to_string(r.survivors),
                   format_double(r.ms_per_scene)});
  return csv_format(csv);
}

}  // namespace imblab
