#include <doctest.h>

#include <random>
#include <thread>

#include "../support/support.hpp"
#include "palmscan/errors.hpp"
#include "palmscan/registry.hpp"

using namespace palmscan;
using namespace palmscan::registry;

namespace {

const geo::GeoPoint kBase{32.75, -117.13};

TreeRecord candidate(const geo::GeoPoint& p, double score = 0.8) {
  TreeRecord t;
  t.location = p;
  t.aerial_score = score;
  return t;
}

Observation obs(YearMonth d, std::string pano, double heading, std::optional<CrownLabel> label = std::nullopt) {
  Observation o;
  o.capture_date = d;
  o.pano_id = std::move(pano);
  o.heading = heading;
  if (label) o.classification = ClassificationResult::one_hot(*label);
  return o;
}

}  // namespace

TEST_CASE("tree ids are stable at micro-degree resolution") {
  CHECK(tree_id_for(kBase) == tree_id_for({32.75 + 1e-8, -117.13 - 2e-8}));
  CHECK(tree_id_for(kBase) != tree_id_for({32.750001, -117.13}));
  CHECK(tree_id_for({-0.0000001, 0.0}) == tree_id_for({0.0, 0.0}));
  CHECK(tree_id_for(kBase).size() == 16);
}

TEST_CASE("upsert merges within the dedup radius only") {
  TreeRegistry reg;
  const auto a = reg.upsert(candidate(kBase));
  const auto near = reg.upsert(candidate(geo::destination(kBase, 45, 2.9), 0.95));
  CHECK(near.id == a.id);
  CHECK(near.aerial_score == 0.95);
  CHECK(near.location == kBase);  // the stored location does not drift
  const auto far = reg.upsert(candidate(geo::destination(kBase, 45, 3.1)));
  CHECK(far.id != a.id);
  CHECK(reg.size() == 2);
  // Between two trees, the nearer one absorbs the candidate.
  const auto mid = geo::destination(kBase, 45, 1.8);
  CHECK(reg.upsert(candidate(mid)).id == far.id);
}

TEST_CASE("greedy upsert matches a linear-scan oracle") {
  std::mt19937_64 rng(31);
  TreeRegistry reg;
  std::vector<geo::GeoPoint> oracle_seeds;
  for (int i = 0; i < 2000; ++i) {
    const auto p = geo::destination(kBase, test::uniform(rng, 0, 360), test::uniform(rng, 0, 200));
    reg.upsert(candidate(p));
    bool absorbed = false;
    for (const auto& s : oracle_seeds) absorbed = absorbed || geo::haversine_m(s, p) <= 3.0;
    if (!absorbed) oracle_seeds.push_back(p);
  }
  REQUIRE(reg.size() == oracle_seeds.size());
  for (const auto& s : oracle_seeds) CHECK(reg.find(tree_id_for(s)).has_value());
  const auto all = reg.all();
  std::size_t too_close = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      too_close += geo::haversine_m(all[i].location, all[j].location) <= 3.0;
    }
  }
  CHECK(too_close == 0);
}

TEST_CASE("observations are normalized on merge") {
  TreeRegistry reg;
  auto c = candidate(kBase);
  c.observations = {obs({2018, 4}, "p2", 90), obs({2017, 11}, "p1", 80)};
  reg.upsert(c);
  auto again = candidate(kBase);
  again.observations = {obs({2018, 4}, "p2", 90, CrownLabel::infested)};
  const auto t = reg.upsert(again);
  REQUIRE(t.observations.size() == 2);
  CHECK(t.observations[0].capture_date == YearMonth{2017, 11});
  CHECK(t.observations[1].classification->label() == CrownLabel::infested);
  // Same pano and heading on another date is another observation.
  const auto n = normalize_observations({obs({2018, 4}, "p", 90), obs({2019, 4}, "p", 90)});
  CHECK(n.size() == 2);
}

TEST_CASE("status fields follow the latest non-default value") {
  TreeRegistry reg;
  auto c = candidate(kBase);
  c.source = TreeSource::street_only;
  reg.upsert(c);
  auto d = candidate(kBase);
  d.street = StreetStatus::confirmed;
  const auto t = reg.upsert(d);
  CHECK(t.source == TreeSource::aerial);
  CHECK(t.street == StreetStatus::confirmed);
  auto e = candidate(kBase);
  CHECK(reg.upsert(e).street == StreetStatus::confirmed);
}

TEST_CASE("serialization is canonical and roundtrips") {
  std::mt19937_64 rng(32);
  TreeRegistry reg;
  for (int i = 0; i < 50; ++i) {
    auto c = candidate(geo::destination(kBase, test::uniform(rng, 0, 360), test::uniform(rng, 0, 300)));
    c.observations = {obs({2019, 4}, "p" + std::to_string(i), 12.5, CrownLabel::healthy)};
    c.observations[0].crown_box = geo::PixelBox{300, 200, 340, 260};
    reg.upsert(c);
  }
  const auto text = reg.serialize();
  const auto back = TreeRegistry::parse(text, "mem");
  CHECK(back.serialize() == text);
  CHECK(back.size() == reg.size());
  const auto lines = io::parse_jsonl(text, "mem");
  CHECK(lines[0]["schema"] == "palmscan.tree_registry");
  for (std::size_t i = 2; i < lines.size(); ++i) CHECK(lines[i - 1]["id"] < lines[i]["id"]);

  test::TempDir dir("reg");
  CHECK(reg.save(dir / "registry.jsonl"));
  CHECK_FALSE(reg.save(dir / "registry.jsonl"));
  CHECK(TreeRegistry::open(dir / "registry.jsonl").serialize() == text);
  CHECK(TreeRegistry::open(dir / "none.jsonl").size() == 0);
}

TEST_CASE("registry parse errors") {
  CHECK_THROWS_AS(TreeRegistry::parse("{\"a\":1}\n", "x"), PersistenceError);
  CHECK_THROWS_AS(TreeRegistry::parse("{\"schema\":\"palmscan.tree_registry\",\"schema_version\":9}\n", "x"),
                  PersistenceError);
  const std::string header = "{\"schema\":\"palmscan.tree_registry\",\"schema_version\":1}\n";
  CHECK_THROWS_AS(TreeRegistry::parse(header + "{\"id\":\"x\"}\n", "x"), PersistenceError);
  // Later lines with the same id win.
  auto t = candidate(kBase);
  t.id = tree_id_for(kBase);
  auto u = t;
  u.aerial_score = 0.1;
  const auto reg = TreeRegistry::parse(header + to_json(t).dump() + "\n" + to_json(u).dump() + "\n", "x");
  CHECK(reg.find(t.id)->aerial_score == 0.1);
}

TEST_CASE("query_by_box and replace") {
  TreeRegistry reg;
  const auto a = reg.upsert(candidate(kBase));
  reg.upsert(candidate(geo::destination(kBase, 0, 100)));
  const auto hits = reg.query_by_box({32.7499, -117.1301, 32.7501, -117.1299});
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].id == a.id);
  CHECK_THROWS_AS(reg.query_by_box({1, 1, 0, 0}), DomainError);
  auto changed = a;
  changed.street = StreetStatus::unreachable;
  CHECK(reg.replace(changed));
  CHECK(reg.find(a.id)->street == StreetStatus::unreachable);
  changed.id = "nope";
  CHECK_FALSE(reg.replace(changed));
  auto moved = a;
  moved.location.lat += 1e-4;
  CHECK_THROWS_AS(reg.replace(moved), DomainError);
}

TEST_CASE("snapshots are stable while a writer proceeds") {
  TreeRegistry reg;
  reg.upsert(candidate(kBase));
  const auto snap = reg.snapshot();
  std::thread writer([&] {
    for (int i = 1; i <= 500; ++i) reg.upsert(candidate(geo::destination(kBase, 90, 5.0 * i)));
  });
  std::vector<std::thread> readers;
  for (int r = 0; r < 4; ++r) {
    readers.emplace_back([&] {
      for (int i = 0; i < 200; ++i) {
        const auto s = reg.snapshot();
        REQUIRE(s->size() >= 1);
        REQUIRE(reg.size() >= s->size());
      }
    });
  }
  writer.join();
  for (auto& t : readers) t.join();
  CHECK(snap->size() == 1);
  CHECK(reg.size() == 501);
  CHECK(reg.snapshot()->size() == 501);
}
