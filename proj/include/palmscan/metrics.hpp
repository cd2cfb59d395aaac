#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "palmscan/classification.hpp"
#include "palmscan/gateway.hpp"
#include "palmscan/geo.hpp"
#include "palmscan/io.hpp"

namespace palmscan::metrics {

struct GroundTruthBox {
  std::string image_ref;
  geo::PixelBox box;
  std::string label;
};

// Continuous-coordinate intersection over union; 0 when the union is empty.
double iou(const geo::PixelBox& a, const geo::PixelBox& b) noexcept;

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per ranked detection
  double ap = 0.0;
  bool defined = true;  // false when both inputs are empty
};

// Single-class VOC average precision with all-points interpolation.
// Detections are ranked by score (ties: box, then image_ref); each takes the
// ground truth of highest IoU in its image, counting as a true positive when
// that IoU reaches the threshold and the ground truth is still unmatched.
PRCurve average_precision(const std::vector<gateway::Detection>& dets, const std::vector<GroundTruthBox>& gts,
                          double iou_threshold = 0.5);

struct MeanAP {
  std::vector<std::pair<std::string, PRCurve>> per_label;  // label ascending
  std::optional<double> map;  // mean over labels with a defined AP
};
MeanAP mean_average_precision(const std::vector<gateway::Detection>& dets, const std::vector<GroundTruthBox>& gts,
                              double iou_threshold = 0.5);

struct ClassificationMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;  // 0 when nothing was predicted infested
  double recall = 0.0;     // 0 when nothing is truly infested
  double f1 = 0.0;
  std::optional<double> auc;  // undefined for single-class input
};

// Positive class is infested; predictions are argmax labels and AUC ranks
// the infested probability (ties share the average rank).
ClassificationMetrics classification_metrics(const std::vector<std::pair<CrownLabel, ClassificationResult>>& pairs);

// Annotation lines: {"image_ref": "...", "box": [x0,y0,x1,y1], "label": "..."}.
std::vector<GroundTruthBox> parse_ground_truth(const std::vector<Json>& lines);
Json to_json(const GroundTruthBox& g);

}  // namespace palmscan::metrics
