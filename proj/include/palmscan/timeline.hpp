#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "palmscan/classification.hpp"
#include "palmscan/dates.hpp"
#include "palmscan/gateway.hpp"
#include "palmscan/linker.hpp"
#include "palmscan/registry.hpp"

namespace palmscan::timeline {

enum class TimelineStatus { never_infested, onset_known, onset_unknown, inconsistent };

std::string_view to_string(TimelineStatus s) noexcept;

struct TimelinePoint {
  YearMonth date;
  CrownLabel label = CrownLabel::healthy;
  bool operator==(const TimelinePoint&) const = default;
};

// Infestation began in (last_healthy, first_infested].
struct Transition {
  YearMonth last_healthy;
  YearMonth first_infested;
  bool operator==(const Transition&) const = default;

  bool contains(const YearMonth& onset) const noexcept { return last_healthy < onset && onset <= first_infested; }
};

struct InfestationTimeline {
  std::vector<TimelinePoint> points;  // date ascending, unknown labels removed
  std::optional<Transition> transition;
  TimelineStatus status = TimelineStatus::never_infested;
};

// Reduces each classification to its argmax label, drops "unknown", sorts
// and classifies the sequence. Throws DomainError on empty input.
InfestationTimeline build_timeline(const std::vector<std::pair<YearMonth, ClassificationResult>>& points);
InfestationTimeline build_timeline_from_labels(std::vector<TimelinePoint> points);

// Timeline over a tree's classified observations; never-infested when none.
InfestationTimeline timeline_for(const registry::TreeRecord& tree);

Json to_json(const InfestationTimeline& t);

struct HistoryBackends {
  gateway::ChannelFactory detect;    // street crown detector
  gateway::ChannelFactory classify;  // crown classifier
  std::size_t workers = 1;
  double score_threshold = gateway::kDefaultScoreThreshold;
  // Fetches the view and returns the image path handed to the backend.
  // Defaults to the bare street image reference.
  std::function<std::string(const StreetImageRequest&)> street_image_path;
};

struct HistoryOutcome {
  std::vector<registry::Observation> new_observations;  // successful historical captures
  std::size_t failed_requests = 0;
  InfestationTimeline timeline;
};

// Re-aims every other-dated panorama near each tree at it, detects and
// classifies the crown, and rebuilds the tree's timeline. Failed requests
// leave gaps. Each tree needs a current observation with pano, heading,
// crown box and classification.
std::vector<HistoryOutcome> classify_histories(const std::vector<registry::TreeRecord>& trees,
                                               const linker::PanoramaIndex& panos, const HistoryBackends& backends);
HistoryOutcome classify_tree_history(const registry::TreeRecord& tree, const linker::PanoramaIndex& panos,
                                     const HistoryBackends& backends);

}  // namespace palmscan::timeline
