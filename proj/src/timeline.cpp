#include "palmscan/timeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "palmscan/errors.hpp"

namespace palmscan::timeline {

namespace {

// Infested sorts before healthy on the same date so a same-month conflict
// reads as infested followed by healthy.
int label_rank(CrownLabel l) { return l == CrownLabel::infested ? 0 : 1; }

bool point_order(const TimelinePoint& a, const TimelinePoint& b) {
  if (a.date != b.date) return a.date < b.date;
  return label_rank(a.label) < label_rank(b.label);
}

double token_heading(double h) { return std::stod(heading_token(h)); }

const registry::Observation* current_observation(const registry::TreeRecord& tree) {
  const registry::Observation* cur = nullptr;
  for (const auto& o : tree.observations) {
    if (o.pano_id && o.heading && o.crown_box && o.classification) {
      if (!cur || cur->capture_date <= o.capture_date) cur = &o;
    }
  }
  return cur;
}

}  // namespace

std::string_view to_string(TimelineStatus s) noexcept {
  switch (s) {
    case TimelineStatus::never_infested:
      return "never-infested";
    case TimelineStatus::onset_known:
      return "infested-onset-known";
    case TimelineStatus::onset_unknown:
      return "infested-onset-unknown";
    case TimelineStatus::inconsistent:
      return "inconsistent";
  }
  return "never-infested";
}

InfestationTimeline build_timeline_from_labels(std::vector<TimelinePoint> points) {
  std::erase_if(points, [](const TimelinePoint& p) { return p.label == CrownLabel::unknown; });
  std::sort(points.begin(), points.end(), point_order);

  InfestationTimeline out;
  out.points = std::move(points);
  const auto& pts = out.points;
  const auto first_inf = std::find_if(pts.begin(), pts.end(), [](const auto& p) { return p.label == CrownLabel::infested; });
  if (first_inf == pts.end()) {
    out.status = TimelineStatus::never_infested;
    return out;
  }
  const auto last_healthy = std::find_if(std::make_reverse_iterator(first_inf), pts.rend(),
                                         [](const auto& p) { return p.label == CrownLabel::healthy; });
  if (last_healthy != pts.rend()) out.transition = Transition{last_healthy->date, first_inf->date};
  const bool relapse = std::any_of(first_inf, pts.end(), [](const auto& p) { return p.label == CrownLabel::healthy; });
  if (relapse) {
    out.status = TimelineStatus::inconsistent;
  } else {
    out.status = out.transition ? TimelineStatus::onset_known : TimelineStatus::onset_unknown;
  }
  return out;
}

InfestationTimeline build_timeline(const std::vector<std::pair<YearMonth, ClassificationResult>>& points) {
  if (points.empty()) throw DomainError("timeline needs at least one observation");
  std::vector<TimelinePoint> labels;
  labels.reserve(points.size());
  for (const auto& [date, c] : points) labels.push_back({date, c.label()});
  return build_timeline_from_labels(std::move(labels));
}

InfestationTimeline timeline_for(const registry::TreeRecord& tree) {
  std::vector<std::pair<YearMonth, ClassificationResult>> pts;
  for (const auto& o : tree.observations) {
    if (o.classification) pts.emplace_back(o.capture_date, *o.classification);
  }
  if (pts.empty()) return {};
  return build_timeline(pts);
}

Json to_json(const InfestationTimeline& t) {
  Json points = Json::array();
  for (const auto& p : t.points) {
    Json j;
    j["date"] = p.date.str();
    j["label"] = palmscan::to_string(p.label);
    points.push_back(j);
  }
  Json j;
  j["status"] = to_string(t.status);
  if (t.transition) {
    j["transition"] = {{"last_healthy", t.transition->last_healthy.str()},
                       {"first_infested", t.transition->first_infested.str()}};
  } else {
    j["transition"] = nullptr;
  }
  j["points"] = points;
  return j;
}

std::vector<HistoryOutcome> classify_histories(const std::vector<registry::TreeRecord>& trees,
                                               const linker::PanoramaIndex& panos, const HistoryBackends& backends) {
  struct Planned {
    std::size_t tree;
    PanoramaRecord pano;
    StreetImageRequest view;
    std::string path;
  };
  std::vector<Planned> planned;
  std::vector<HistoryOutcome> outcomes(trees.size());

  for (std::size_t t = 0; t < trees.size(); ++t) {
    const auto& tree = trees[t];
    const auto* cur = current_observation(tree);
    if (!cur) throw DomainError("tree " + tree.id + " has no classified current observation");
    auto original_pano = panos.find(*cur->pano_id);
    if (!original_pano) {
      // The current capture is not in the catalog; rebuild it from the observation.
      original_pano = PanoramaRecord{*cur->pano_id, tree.location, cur->capture_date};
    }
    const linker::OriginalView original{*original_pano, *cur->heading, *cur->crown_box};
    for (const auto& hist : panos.historical_for(tree.location, cur->capture_date)) {
      StreetImageRequest view;
      try {
        view = linker::recenter_heading(tree.location, original, hist);
      } catch (const DomainError&) {
        ++outcomes[t].failed_requests;
        continue;
      }
      view.heading = token_heading(view.heading);
      std::string path = backends.street_image_path ? backends.street_image_path(view)
                                                    : street_image_ref(hist.pano_id, view.heading);
      planned.push_back({t, hist, view, std::move(path)});
    }
  }

  // One detection request per distinct image.
  std::vector<gateway::DetectionRequest> requests;
  std::map<std::string, std::size_t> request_of;
  for (const auto& p : planned) {
    if (request_of.emplace(p.path, requests.size()).second) {
      requests.push_back(gateway::DetectionRequest::street_view(p.path, p.view));
    }
  }
  const auto det = gateway::run_detection_batch(requests, backends.detect, {backends.score_threshold, backends.workers});
  std::set<std::string> failed_images;
  for (const auto& f : det.failures) failed_images.insert(requests[f.request_index].image_ref);
  std::map<std::string, std::vector<geo::PixelBox>> boxes_of;
  for (const auto& d : det.detections) boxes_of[d.request.image_ref].push_back(d.box);

  std::vector<std::string> crops;
  std::vector<std::pair<std::size_t, geo::PixelBox>> crop_owner;  // planned index, crown
  for (std::size_t i = 0; i < planned.size(); ++i) {
    const auto& p = planned[i];
    if (failed_images.count(p.path)) {
      ++outcomes[p.tree].failed_requests;
      continue;
    }
    auto crown = linker::pick_target_crown(boxes_of[p.path], p.view.width);
    if (!crown) continue;  // tree not visible in this capture: a gap
    crops.push_back(crown_crop_ref(p.path, *crown));
    crop_owner.emplace_back(i, *crown);
  }
  const auto cls = gateway::run_classification_batch(crops, backends.classify, backends.workers);
  for (std::size_t c = 0; c < crops.size(); ++c) {
    const auto& [i, crown] = crop_owner[c];
    const auto& p = planned[i];
    if (!cls.results[c]) {
      ++outcomes[p.tree].failed_requests;
      continue;
    }
    registry::Observation o;
    o.capture_date = p.pano.capture_date;
    o.pano_id = p.pano.pano_id;
    o.heading = p.view.heading;
    o.crown_box = crown;
    o.classification = *cls.results[c];
    outcomes[p.tree].new_observations.push_back(std::move(o));
  }

  for (std::size_t t = 0; t < trees.size(); ++t) {
    auto merged = trees[t];
    merged.observations.insert(merged.observations.end(), outcomes[t].new_observations.begin(),
                               outcomes[t].new_observations.end());
    merged.observations = registry::normalize_observations(std::move(merged.observations));
    outcomes[t].timeline = timeline_for(merged);
  }
  return outcomes;
}

HistoryOutcome classify_tree_history(const registry::TreeRecord& tree, const linker::PanoramaIndex& panos,
                                     const HistoryBackends& backends) {
  return classify_histories({tree}, panos, backends).front();
}

}  // namespace palmscan::timeline
