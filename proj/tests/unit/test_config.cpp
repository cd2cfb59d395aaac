#include <doctest.h>

#include "../support/support.hpp"
#include "palmscan/config.hpp"
#include "palmscan/errors.hpp"

using namespace palmscan;
using namespace palmscan::config;

namespace {

Json minimal() {
  return Json::parse(R"({"aoi": {"name": "a", "box": {"south": 32.75, "west": -117.13, "north": 32.76, "east": -117.12}}})");
}

}  // namespace

TEST_CASE("defaults and relative path resolution") {
  const auto c = parse_config(minimal(), "/base/dir");
  CHECK(c.workspace == "/base/dir/workspace");
  CHECK(c.cache_dir == "/base/dir/workspace/cache");
  CHECK(c.zoom == 20);
  CHECK(c.workers == 4);
  CHECK(c.provider.street_unit_cost_micro == 7'000);
  CHECK(c.provider.key_env == "PALMSCAN_API_KEY");
  CHECK_FALSE(c.aerial_backend);

  auto doc = minimal();
  doc["workspace"] = "../ws";
  doc["streets"] = "/abs/streets.geojson";
  doc["panoramas"] = "data/panos.jsonl";
  doc["provider"] = {{"cache_dir", "cache2"}};
  const auto d = parse_config(doc, "/base/dir");
  CHECK(d.workspace == "/base/ws");
  CHECK(*d.streets == "/abs/streets.geojson");
  CHECK(*d.panoramas == "/base/dir/data/panos.jsonl");
  CHECK(d.cache_dir == "/base/dir/cache2");
}

TEST_CASE("unknown keys are rejected at every level") {
  auto doc = minimal();
  doc["zooom"] = 19;
  CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);
  doc = minimal();
  doc["provider"] = {{"templat", "x"}};
  CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);
  doc = minimal();
  doc["backends"] = {{"detector", {{"command", {"x"}}}}};
  CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);
  doc = minimal();
  doc["costs"] = {{"street_usd", 0.007}};
  CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);
}

TEST_CASE("API keys cannot live in the config") {
  auto doc = minimal();
  doc["provider"] = {{"api_key", "abc"}};
  try {
    parse_config(doc, "/");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("key_env") != std::string::npos);
  }
  doc["provider"] = {{"key_env", "MY_KEY"}};
  CHECK(parse_config(doc, "/").provider.key_env == "MY_KEY");
}

TEST_CASE("field validation") {
  const std::vector<std::pair<std::string, Json>> bad{
      {"zoom", 0},          {"zoom", 23},          {"zoom", "20"},           {"tile_size", 0},
      {"street_image_size", 641}, {"fov", 0},      {"sample_spacing_m", -1}, {"headings", Json::array()},
      {"headings", {360}},  {"score_threshold", 0}, {"score_threshold", 1.5}, {"dedup_radius_m", 0},
      {"workers", 0},       {"heatmap_cell_m", 0}, {"hotspot_min_count", 0}, {"backends", 3},
  };
  for (const auto& [k, v] : bad) {
    auto doc = minimal();
    doc[k] = v;
    CAPTURE(k);
    CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);
  }
  CHECK_THROWS_AS(parse_config(Json::array(), "/"), ConfigError);
  CHECK_THROWS_AS(parse_config(Json::object(), "/"), ConfigError);
  auto doc = minimal();
  doc["aoi"] = {{"name", "x"}, {"box", {{"south", 1}, {"west", 1}, {"north", 0}, {"east", 2}}}};
  CHECK_THROWS_AS(parse_config(doc, "/"), ConfigError);
}

TEST_CASE("micro-dollar costs") {
  CHECK(usd_to_micro(0.007) == 7'000);
  CHECK(usd_to_micro(0.0) == 0);
  CHECK(usd_to_micro(31.808) == 31'808'000);
  CHECK(usd_to_micro(0.000001) == 1);
  CHECK_THROWS_AS(usd_to_micro(-0.01), ConfigError);
  CHECK_THROWS_AS(usd_to_micro(0.0000001), ConfigError);
  auto doc = minimal();
  doc["costs"] = {{"street_image_usd", 0.005}, {"aerial_tile_usd", 0.0005}};
  const auto c = parse_config(doc, "/");
  CHECK(c.provider.street_unit_cost_micro == 5'000);
  CHECK(c.provider.aerial_unit_cost_micro == 500);
}

TEST_CASE("backend specs") {
  auto doc = minimal();
  doc["backends"] = {{"aerial", {{"command", {"python3", "-m", "detector"}}}},
                     {"street", {{"mock", {{"world", "w/world.json"}, {"noise", {{"miss_rate", 0.2}}}}}}},
                     {"classify", {{"replay", "manifest.json"}}},
                     {"timeout_s", 2.5}};
  const auto c = parse_config(doc, "/cfg");
  REQUIRE(c.aerial_backend);
  CHECK(c.aerial_backend->kind == BackendSpec::Kind::command);
  CHECK(c.aerial_backend->argv == std::vector<std::string>{"python3", "-m", "detector"});
  CHECK(c.street_backend->kind == BackendSpec::Kind::mock);
  CHECK(c.street_backend->world == "/cfg/w/world.json");
  CHECK(c.street_backend->noise.miss_rate == 0.2);
  CHECK(c.classify_backend->kind == BackendSpec::Kind::replay);
  CHECK(c.classify_backend->manifest == "/cfg/manifest.json");
  CHECK(c.backend_timeout == std::chrono::milliseconds(2500));
  CHECK(to_json(*c.street_backend, "/cfg")["mock"]["world"] == "w/world.json");
  CHECK(to_json(*c.classify_backend, "/cfg") == Json{{"replay", "manifest.json"}});

  for (const Json& b : {Json{{"command", Json::array()}}, Json{{"command", "python3"}}, Json{{"mock", Json::object()}},
                        Json{{"mock", {{"world", "w"}, {"noise", {{"miss_rate", 2}}}}}}, Json{{"other", 1}},
                        Json("python3")}) {
    auto d = minimal();
    d["backends"] = {{"aerial", b}};
    CAPTURE(b.dump());
    CHECK_THROWS_AS(parse_config(d, "/"), ConfigError);
  }
}

TEST_CASE("loading from disk") {
  test::TempDir dir("cfg");
  io::write_file_atomic(dir / "c.json", minimal().dump());
  const auto c = load_config(dir / "c.json");
  CHECK(c.workspace == dir.path() / "workspace");
  io::write_file_atomic(dir / "bad.json", "{not json");
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}
