#include <doctest.h>

#include <algorithm>
#include <random>

#include "../support/oracles.hpp"
#include "../support/support.hpp"
#include "palmscan/errors.hpp"
#include "palmscan/metrics.hpp"

using namespace palmscan;
using namespace palmscan::metrics;

namespace {

gateway::Detection det(const std::string& image, geo::PixelBox b, double score, std::string label = "palm") {
  gateway::Detection d;
  d.box = b;
  d.score = score;
  d.label = std::move(label);
  d.request.image_ref = image;
  return d;
}

oracle::OracleBox obox(const gateway::Detection& d) {
  return {d.request.image_ref, d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max, d.score};
}
oracle::OracleBox obox(const GroundTruthBox& g) {
  return {g.image_ref, g.box.x_min, g.box.y_min, g.box.x_max, g.box.y_max, 0.0};
}

double oracle_ap(std::vector<gateway::Detection> dets, const std::vector<GroundTruthBox>& gts, double thr) {
  std::sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  std::vector<oracle::OracleBox> d, g;
  for (const auto& x : dets) d.push_back(obox(x));
  for (const auto& x : gts) g.push_back(obox(x));
  return oracle::voc_ap(d, g, thr);
}

// Five detections against three ground truths over two images: a duplicate
// hit, a miss and a late true positive.
std::pair<std::vector<gateway::Detection>, std::vector<GroundTruthBox>> constructed_case() {
  const std::vector<GroundTruthBox> gts{
      {"a", {0, 0, 10, 10}, "palm"}, {"a", {20, 20, 30, 30}, "palm"}, {"b", {0, 0, 10, 10}, "palm"}};
  const std::vector<gateway::Detection> dets{
      det("a", {0, 0, 10, 10}, 0.95), det("a", {1, 1, 11, 11}, 0.9), det("b", {0, 0, 10, 10}, 0.8),
      det("a", {40, 40, 50, 50}, 0.7), det("a", {20, 20, 30, 31}, 0.6)};
  return {dets, gts};
}

}  // namespace

TEST_CASE("iou values") {
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(iou({0, 0, 10, 10}, {10, 0, 20, 10}) == 0.0);
  CHECK(iou({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(50.0 / 150.0));
  CHECK(iou({0, 0, 0, 0}, {0, 0, 0, 0}) == 0.0);
}

TEST_CASE("constructed 5-detection / 3-truth case") {
  const auto [dets, gts] = constructed_case();
  const auto curve = average_precision(dets, gts, 0.5);
  CHECK(curve.defined);
  CHECK(std::abs(curve.ap - 34.0 / 45.0) <= 1e-9);
  CHECK(std::abs(curve.ap - oracle_ap(dets, gts, 0.5)) <= 1e-9);
  REQUIRE(curve.points.size() == 5);
  CHECK(curve.points[1].precision == 0.5);  // the duplicate is a false positive
  CHECK(curve.points[4].recall == 1.0);
  // Input order does not matter.
  auto rev = dets;
  std::reverse(rev.begin(), rev.end());
  CHECK(average_precision(rev, gts, 0.5).ap == curve.ap);
}

TEST_CASE("random cases match the brute-force oracle") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<GroundTruthBox> gts;
    std::vector<gateway::Detection> dets;
    const int images = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int im = 0; im < images; ++im) {
      const std::string ref = "img" + std::to_string(im);
      const int ng = std::uniform_int_distribution<int>(0, 4)(rng);
      for (int k = 0; k < ng; ++k) {
        const double x = test::uniform(rng, 0, 200), y = test::uniform(rng, 0, 200);
        gts.push_back({ref, {x, y, x + test::uniform(rng, 10, 40), y + test::uniform(rng, 10, 40)}, "palm"});
      }
      const int nd = std::uniform_int_distribution<int>(0, 6)(rng);
      for (int k = 0; k < nd; ++k) {
        geo::PixelBox b;
        if (!gts.empty() && k % 2 == 0) {
          const auto& g = gts[std::uniform_int_distribution<std::size_t>(0, gts.size() - 1)(rng)].box;
          const double j = test::uniform(rng, -6, 6);
          b = {g.x_min + j, g.y_min, g.x_max + j, g.y_max};
        } else {
          const double x = test::uniform(rng, 0, 200), y = test::uniform(rng, 0, 200);
          b = {x, y, x + 20, y + 20};
        }
        dets.push_back(det(ref, b, test::uniform(rng, 0, 1)));
      }
    }
    if (gts.empty()) continue;
    for (double thr : {0.3, 0.5, 0.75}) {
      CHECK(std::abs(average_precision(dets, gts, thr).ap - oracle_ap(dets, gts, thr)) <= 1e-9);
    }
  }
}

TEST_CASE("AP boundary cases") {
  const std::vector<GroundTruthBox> gts{{"a", {0, 0, 10, 10}, "palm"}, {"b", {5, 5, 25, 25}, "palm"}};
  std::vector<gateway::Detection> perfect{det("a", {0, 0, 10, 10}, 0.9), det("b", {5, 5, 25, 25}, 0.8)};
  CHECK(average_precision(perfect, gts).ap == 1.0);
  CHECK(average_precision({}, gts).ap == 0.0);
  CHECK(average_precision(perfect, {}).ap == 0.0);
  CHECK_FALSE(average_precision({}, {}).defined);
  // A detection in an image without ground truth is a false positive.
  CHECK(average_precision({det("c", {0, 0, 10, 10}, 0.99), perfect[0], perfect[1]}, gts).ap ==
        doctest::Approx(2.0 / 3.0));
}

TEST_CASE("AP properties") {
  std::mt19937_64 rng(52);
  const auto [dets, gts] = constructed_case();
  const double base = average_precision(dets, gts).ap;
  // Scaling all scores keeps the ranking and the AP.
  auto scaled = dets;
  for (auto& d : scaled) d.score *= 0.5;
  CHECK(average_precision(scaled, gts).ap == base);
  // Appending a lowest-scored false positive never raises AP.
  auto more = dets;
  more.push_back(det("a", {100, 100, 110, 110}, 0.01));
  CHECK(average_precision(more, gts).ap <= base);
  // AP lies in [0, 1] and loosening the threshold never hurts.
  for (int i = 0; i < 50; ++i) {
    auto d = dets;
    for (auto& x : d) x.score = test::uniform(rng, 0, 1);
    const double strict = average_precision(d, gts, 0.9).ap;
    const double loose = average_precision(d, gts, 0.3).ap;
    CHECK(strict >= 0.0);
    CHECK(loose <= 1.0);
    CHECK(loose >= strict);
  }
}

TEST_CASE("mean AP over labels") {
  const std::vector<GroundTruthBox> gts{{"a", {0, 0, 10, 10}, "palm"}, {"a", {50, 50, 60, 60}, "other"}};
  const std::vector<gateway::Detection> dets{det("a", {0, 0, 10, 10}, 0.9, "palm"),
                                             det("a", {0, 0, 10, 10}, 0.8, "other")};
  const auto m = mean_average_precision(dets, gts);
  REQUIRE(m.per_label.size() == 2);
  CHECK(m.per_label[0].first == "other");
  CHECK(m.per_label[0].second.ap == 0.0);
  CHECK(m.per_label[1].second.ap == 1.0);
  CHECK(*m.map == 0.5);
  CHECK_FALSE(mean_average_precision({}, {}).map);
}

TEST_CASE("AUC matches the pairwise oracle on 50 random samples") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<CrownLabel, ClassificationResult>> pairs;
    std::vector<std::pair<bool, double>> labelled;
    for (int i = 0; i < 50; ++i) {
      const bool pos = test::uniform(rng, 0, 1) < 0.4;
      // Coarse scores force ties on some trials.
      double s = test::uniform(rng, 0, 1) * 0.6 + (pos ? 0.3 : 0.0);
      if (trial % 2 == 0) s = std::round(s * 10) / 10;
      s = std::min(s, 1.0);
      ClassificationResult c;
      c.probs = {1.0 - s, s, 0.0};
      pairs.emplace_back(pos ? CrownLabel::infested : CrownLabel::healthy, c);
      labelled.emplace_back(pos, s);
    }
    const auto m = classification_metrics(pairs);
    REQUIRE(m.auc);
    CHECK(std::abs(*m.auc - oracle::pairwise_auc(labelled)) <= 1e-9);
  }
}

TEST_CASE("confusion counts and degenerate metrics") {
  const auto h = ClassificationResult::one_hot(CrownLabel::healthy);
  const auto inf = ClassificationResult::one_hot(CrownLabel::infested);
  const auto m = classification_metrics({{CrownLabel::infested, inf},
                                         {CrownLabel::infested, h},
                                         {CrownLabel::healthy, inf},
                                         {CrownLabel::healthy, h},
                                         {CrownLabel::healthy, h}});
  CHECK(m.tp == 1);
  CHECK(m.fn == 1);
  CHECK(m.fp == 1);
  CHECK(m.tn == 2);
  CHECK(m.precision == 0.5);
  CHECK(m.recall == 0.5);
  CHECK(m.f1 == 0.5);
  const auto all_healthy = classification_metrics({{CrownLabel::healthy, h}, {CrownLabel::healthy, h}});
  CHECK_FALSE(all_healthy.auc);
  CHECK(all_healthy.precision == 0.0);
  CHECK(all_healthy.recall == 0.0);
  CHECK(all_healthy.f1 == 0.0);
  CHECK_THROWS_AS(classification_metrics({}), DomainError);
}

TEST_CASE("ground truth parsing") {
  const auto gts = parse_ground_truth({Json{{"image_ref", "a"}, {"box", {1, 2, 3, 4}}, {"label", "palm"}}});
  REQUIRE(gts.size() == 1);
  CHECK(gts[0].box == geo::PixelBox{1, 2, 3, 4});
  CHECK(to_json(gts[0])["box"][3] == 4);
  CHECK_THROWS_AS(parse_ground_truth({Json{{"image_ref", "a"}, {"box", {1, 2, 3}}, {"label", "palm"}}}), DomainError);
  CHECK_THROWS_AS(parse_ground_truth({Json{{"image_ref", "a"}, {"box", {5, 2, 3, 4}}, {"label", "palm"}}}), DomainError);
  CHECK_THROWS_AS(parse_ground_truth({Json{{"box", {1, 2, 3, 4}}}}), DomainError);
}
