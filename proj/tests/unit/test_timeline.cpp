#include <doctest.h>

#include "../support/oracles.hpp"
#include "palmscan/errors.hpp"
#include "palmscan/timeline.hpp"

using namespace palmscan;
using namespace palmscan::timeline;

namespace {

const std::vector<YearMonth> kDates{{2015, 2}, {2016, 4}, {2017, 11}, {2018, 4}, {2019, 4}};

std::vector<std::pair<YearMonth, ClassificationResult>> one_hot_seq(const std::vector<CrownLabel>& labels) {
  std::vector<std::pair<YearMonth, ClassificationResult>> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.emplace_back(kDates[i], ClassificationResult::one_hot(labels[i]));
  return out;
}

void check_against_oracle(const std::vector<CrownLabel>& labels) {
  std::vector<std::pair<YearMonth, CrownLabel>> seq;
  for (std::size_t i = 0; i < labels.size(); ++i) seq.emplace_back(kDates[i], labels[i]);
  const auto want = oracle::timeline_rule(seq);
  const auto got = build_timeline(one_hot_seq(labels));
  REQUIRE(got.status == want.status);
  REQUIRE(got.transition.has_value() == want.transition.has_value());
  if (want.transition) {
    REQUIRE(got.transition->last_healthy == want.transition->first);
    REQUIRE(got.transition->first_infested == want.transition->second);
  }
}

}  // namespace

TEST_CASE("all 2^5 healthy/infested sequences match the rule oracle") {
  for (int mask = 0; mask < 32; ++mask) {
    std::vector<CrownLabel> labels;
    for (int i = 0; i < 5; ++i) labels.push_back(mask & (1 << i) ? CrownLabel::infested : CrownLabel::healthy);
    CAPTURE(mask);
    check_against_oracle(labels);
  }
}

TEST_CASE("all 3^5 sequences with unknowns match the rule oracle") {
  for (int code = 0; code < 243; ++code) {
    std::vector<CrownLabel> labels;
    int c = code;
    for (int i = 0; i < 5; ++i, c /= 3) labels.push_back(static_cast<CrownLabel>(c % 3));
    CAPTURE(code);
    check_against_oracle(labels);
  }
}

TEST_CASE("the two-capture healthy-then-infested pattern") {
  const auto t = build_timeline({{{2017, 11}, ClassificationResult::one_hot(CrownLabel::healthy)},
                                 {{2018, 4}, ClassificationResult::one_hot(CrownLabel::infested)}});
  CHECK(t.status == TimelineStatus::onset_known);
  REQUIRE(t.transition);
  CHECK(t.transition->last_healthy == YearMonth{2017, 11});
  CHECK(t.transition->first_infested == YearMonth{2018, 4});
  CHECK(t.transition->contains({2018, 1}));
  CHECK(t.transition->contains({2018, 4}));
  CHECK_FALSE(t.transition->contains({2017, 11}));
  const auto j = to_json(t);
  CHECK(j["status"] == "infested-onset-known");
  CHECK(j["transition"]["last_healthy"] == "2017-11");
  CHECK(j["transition"]["first_infested"] == "2018-04");
}

TEST_CASE("timeline edge cases") {
  CHECK_THROWS_AS(build_timeline({}), DomainError);
  // Input order does not matter.
  const auto t = build_timeline({{{2018, 4}, ClassificationResult::one_hot(CrownLabel::infested)},
                                 {{2015, 2}, ClassificationResult::one_hot(CrownLabel::healthy)}});
  CHECK(t.points.front().date == YearMonth{2015, 2});
  CHECK(t.status == TimelineStatus::onset_known);
  // Same-month conflict reads as infested then healthy.
  const auto same = build_timeline_from_labels({{{2018, 4}, CrownLabel::healthy}, {{2018, 4}, CrownLabel::infested}});
  CHECK(same.status == TimelineStatus::inconsistent);
  CHECK_FALSE(same.transition);
  // Only unknowns: nothing to judge.
  const auto unk = build_timeline({{{2018, 4}, ClassificationResult::one_hot(CrownLabel::unknown)}});
  CHECK(unk.status == TimelineStatus::never_infested);
  CHECK(unk.points.empty());
  CHECK(to_json(unk)["transition"].is_null());
  // A tree without classified observations is never infested.
  registry::TreeRecord bare;
  CHECK(timeline_for(bare).status == TimelineStatus::never_infested);
}

TEST_CASE("history classification through replayed backends") {
  const geo::GeoPoint tree{32.75, -117.13};
  const PanoramaRecord current{"cur", geo::destination(tree, 180, 10), {2019, 4}};
  const PanoramaRecord older{"h2017", geo::destination(tree, 190, 8), {2017, 11}};    // nearer
  const PanoramaRecord middle{"h2018", geo::destination(tree, 170, 14), {2018, 4}};  // farther
  const PanoramaRecord oldest{"h2016", geo::destination(tree, 200, 12), {2016, 4}};
  const linker::PanoramaIndex panos({current, older, middle, oldest}, 50.0);

  registry::TreeRecord t;
  t.id = registry::tree_id_for(tree);
  t.location = tree;
  registry::Observation cur;
  cur.capture_date = current.capture_date;
  cur.pano_id = current.pano_id;
  cur.heading = linker::camera_heading(current.location, tree);
  cur.crown_box = geo::PixelBox{330, 100, 370, 220};
  cur.classification = ClassificationResult::one_hot(CrownLabel::infested);
  t.observations = {cur};

  const linker::OriginalView view{current, *cur.heading, *cur.crown_box};
  const auto ref_for = [&](const PanoramaRecord& p) {
    const auto req = linker::recenter_heading(tree, view, p);
    return street_image_ref(p.pano_id, req.heading);
  };
  // 2017-11 healthy; 2018-04 backend error; 2016-04 shows no crown near the axis.
  const geo::PixelBox box{300, 120, 340, 240};
  Json det;
  det["labels"] = {"palm"};
  det["images"][ref_for(older)] = {{"detections", Json::array({{{"box", {300, 120, 340, 240}}, {"score", 0.9}, {"label", "palm"}}})}};
  det["images"][ref_for(middle)] = {{"error", "image unavailable"}};
  det["images"][ref_for(oldest)] = {{"detections", Json::array({{{"box", {0, 0, 40, 40}}, {"score", 0.9}, {"label", "palm"}}})}};
  Json cls;
  cls["labels"] = {"healthy", "infested", "unknown"};
  cls["images"][crown_crop_ref(ref_for(older), box)] = {{"probs", {{"healthy", 0.9}, {"infested", 0.05}, {"unknown", 0.05}}}};

  HistoryBackends backends;
  backends.detect = gateway::replay_factory(det);
  backends.classify = gateway::replay_factory(cls);
  const auto out = classify_tree_history(t, panos, backends);
  CHECK(out.failed_requests == 1);
  REQUIRE(out.new_observations.size() == 1);
  CHECK(out.new_observations[0].pano_id == std::optional<std::string>("h2017"));
  CHECK(out.timeline.status == TimelineStatus::onset_known);
  REQUIRE(out.timeline.transition);
  CHECK(out.timeline.transition->last_healthy == YearMonth{2017, 11});
  CHECK(out.timeline.transition->first_infested == YearMonth{2019, 4});

  // The nearer panorama used the crown offset; the farther one the bearing.
  const auto older_req = linker::recenter_heading(tree, view, older);
  CHECK(older_req.heading == doctest::Approx(geo::normalize_heading(
                                 linker::camera_heading(older.location, tree) + linker::pixel_shift_deg(*cur.crown_box))));
}

TEST_CASE("history requires a classified current observation") {
  registry::TreeRecord t;
  t.id = "x";
  const linker::PanoramaIndex panos({}, 50.0);
  CHECK_THROWS_AS(classify_tree_history(t, panos, {}), DomainError);
}
