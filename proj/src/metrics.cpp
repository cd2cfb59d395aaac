#include "palmscan/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "palmscan/errors.hpp"

namespace palmscan::metrics {

double iou(const geo::PixelBox& a, const geo::PixelBox& b) noexcept {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.width() * a.height() + b.width() * b.height() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

PRCurve average_precision(const std::vector<gateway::Detection>& dets, const std::vector<GroundTruthBox>& gts,
                          double iou_threshold) {
  PRCurve curve;
  if (dets.empty() && gts.empty()) {
    curve.defined = false;
    return curve;
  }
  if (gts.empty()) return curve;

  std::vector<const gateway::Detection*> ranked;
  for (const auto& d : dets) ranked.push_back(&d);
  std::sort(ranked.begin(), ranked.end(), [](const auto* a, const auto* b) {
    if (a->score != b->score) return a->score > b->score;
    if (a->box != b->box) return a->box < b->box;
    return a->request.image_ref < b->request.image_ref;
  });

  std::map<std::string, std::vector<std::size_t>> gt_by_image;
  for (std::size_t i = 0; i < gts.size(); ++i) gt_by_image[gts[i].image_ref].push_back(i);
  std::vector<bool> used(gts.size(), false);

  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const auto* d = ranked[k];
    // VOC rule: the best-overlapping ground truth in the image decides; a
    // second hit on an already matched one is a false positive.
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    if (auto it = gt_by_image.find(d->request.image_ref); it != gt_by_image.end()) {
      for (std::size_t g : it->second) {
        const double v = iou(d->box, gts[g].box);
        if (v > best_iou) {
          best = g;
          best_iou = v;
        }
      }
    }
    if (best && best_iou >= iou_threshold && !used[*best]) {
      used[*best] = true;
      ++tp;
    }
    curve.points.push_back({static_cast<double>(tp) / gts.size(), static_cast<double>(tp) / (k + 1)});
  }

  // Area under the monotone precision envelope.
  std::vector<double> env(curve.points.size());
  double running = 0.0;
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    running = std::max(running, curve.points[i].precision);
    env[i] = running;
  }
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    curve.ap += (curve.points[i].recall - prev_recall) * env[i];
    prev_recall = curve.points[i].recall;
  }
  return curve;
}

MeanAP mean_average_precision(const std::vector<gateway::Detection>& dets, const std::vector<GroundTruthBox>& gts,
                              double iou_threshold) {
  std::map<std::string, std::pair<std::vector<gateway::Detection>, std::vector<GroundTruthBox>>> by_label;
  for (const auto& d : dets) by_label[d.label].first.push_back(d);
  for (const auto& g : gts) by_label[g.label].second.push_back(g);
  MeanAP out;
  double sum = 0.0;
  std::size_t n = 0;
  for (auto& [label, group] : by_label) {
    auto curve = average_precision(group.first, group.second, iou_threshold);
    if (curve.defined) {
      sum += curve.ap;
      ++n;
    }
    out.per_label.emplace_back(label, std::move(curve));
  }
  if (n > 0) out.map = sum / n;
  return out;
}

ClassificationMetrics classification_metrics(const std::vector<std::pair<CrownLabel, ClassificationResult>>& pairs) {
  if (pairs.empty()) throw DomainError("classification_metrics needs at least one pair");
  ClassificationMetrics m;
  for (const auto& [truth, pred] : pairs) {
    const bool pos = truth == CrownLabel::infested;
    const bool hit = pred.label() == CrownLabel::infested;
    if (pos && hit) ++m.tp;
    if (!pos && hit) ++m.fp;
    if (!pos && !hit) ++m.tn;
    if (pos && !hit) ++m.fn;
  }
  if (m.tp + m.fp > 0) m.precision = static_cast<double>(m.tp) / (m.tp + m.fp);
  if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / (m.tp + m.fn);
  if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);

  // Mann-Whitney statistic with average ranks for tied scores.
  const std::size_t n = pairs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto score = [&](std::size_t i) { return pairs[i].second.prob(CrownLabel::infested); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score(a) < score(b); });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && score(order[j]) == score(order[i])) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (pairs[order[k]].first == CrownLabel::infested) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos > 0 && n_neg > 0) {
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    m.auc = u / (static_cast<double>(n_pos) * n_neg);
  }
  return m;
}

std::vector<GroundTruthBox> parse_ground_truth(const std::vector<Json>& lines) {
  std::vector<GroundTruthBox> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& j = lines[i];
    const auto where = " (annotation " + std::to_string(i + 1) + ")";
    try {
      const auto& b = j.at("box");
      if (!b.is_array() || b.size() != 4) throw DomainError("box must be [x_min, y_min, x_max, y_max]" + where);
      GroundTruthBox g{j.at("image_ref").get<std::string>(),
                       {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()},
                       j.at("label").get<std::string>()};
      if (!(g.box.x_min <= g.box.x_max && g.box.y_min <= g.box.y_max)) throw DomainError("inverted box" + where);
      out.push_back(std::move(g));
    } catch (const Json::exception& e) {
      throw DomainError(std::string("malformed annotation: ") + e.what() + where);
    }
  }
  return out;
}

Json to_json(const GroundTruthBox& g) {
  Json j;
  j["image_ref"] = g.image_ref;
  j["box"] = Json::array({g.box.x_min, g.box.y_min, g.box.x_max, g.box.y_max});
  j["label"] = g.label;
  return j;
}

}  // namespace palmscan::metrics
