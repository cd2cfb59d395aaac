#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <set>

#include "../support/support.hpp"
#include "palmscan/errors.hpp"
#include "palmscan/provider.hpp"

using namespace palmscan;
using namespace palmscan::provider;

TEST_CASE("template expansion") {
  CHECK(expand_template("https://x/{z}/{x}/{y}.png?k={key}", {{"z", "19"}, {"x", "1"}, {"y", "2"}, {"key", "K"}}) ==
        "https://x/19/1/2.png?k=K");
  CHECK(expand_template("no placeholders", {}) == "no placeholders");
  CHECK(expand_template("{a}{a}", {{"a", "b"}}) == "bb");
  CHECK_THROWS_AS(expand_template("x/{zoom}", {{"z", "1"}}), ConfigError);
  CHECK_THROWS_AS(expand_template("x/{z", {{"z", "1"}}), ConfigError);
}

TEST_CASE("sim imagery is charged once per distinct image") {
  test::TempDir dir("prov");
  ProviderSettings s;
  s.rate_limit_per_s = 1000.0;
  ImageryClient client(s, dir.path());
  const geo::TileId t{19, 100, 200};
  const auto p = client.fetch_tile(t);
  CHECK(p == dir.path() / "tiles/19/100/200.png");
  CHECK(std::filesystem::exists(p));
  client.fetch_tile(t);

  StreetImageRequest req;
  req.pano_id = "pano-a";
  for (double h : {0.0, 90.0, 180.0, 270.0, 90.0, 360.0}) {
    req.heading = h;
    client.fetch_street(req);
  }
  CHECK(client.fetched() == 5);
  const auto ledger = client.ledger();
  REQUIRE(ledger.size() == 5);
  CHECK(ledger[0].kind == "aerial");
  CHECK(ledger[0].cost_micro == 0);
  std::set<std::string> refs;
  for (const auto& e : ledger) refs.insert(e.ref);
  CHECK(refs.size() == 5);
  CHECK(client.ledger_cost_micro() == 4 * 7'000);

  // A fresh client over the same cache sees only hits.
  ImageryClient again(s, dir.path());
  req.heading = 0.0;
  again.fetch_street(req);
  CHECK(again.fetched() == 0);
  CHECK(again.ledger().size() == 5);

  StreetImageRequest no_pano;
  CHECK_THROWS_AS(client.fetch_street(no_pano), DomainError);
}

TEST_CASE("templated fetches expand placeholders and read the key from the environment") {
  test::TempDir dir("prov");
  ::setenv("PALMSCAN_TEST_KEY", "s3cret", 1);
  std::vector<std::string> urls;
  ProviderSettings s;
  s.rate_limit_per_s = 1000.0;
  s.key_env = "PALMSCAN_TEST_KEY";
  s.aerial_template = "https://tiles.example/{z}/{x}/{y}?key={key}";
  s.street_template = "https://street.example/?pano={pano}&heading={heading}&fov={fov}&size={width}x{height}&key={key}";
  ImageryClient client(s, dir.path(), [&](const std::string& url) {
    urls.push_back(url);
    return std::string("bytes:") + url;
  });
  client.fetch_tile({18, 3, 4});
  StreetImageRequest req;
  req.pano_id = "P1";
  req.heading = 45.5;
  client.fetch_street(req);
  client.fetch_street(req);
  REQUIRE(urls.size() == 2);
  CHECK(urls[0] == "https://tiles.example/18/3/4?key=s3cret");
  CHECK(urls[1] == "https://street.example/?pano=P1&heading=45.500000&fov=90.0&size=640x640&key=s3cret");
  // The key never reaches the ledger.
  CHECK(io::read_file(dir / "meta/ledger.jsonl").find("s3cret") == std::string::npos);
  CHECK(client.ledger()[1].digest == io::hex64(io::fnv1a64("bytes:" + urls[1])));
  ::unsetenv("PALMSCAN_TEST_KEY");
}

TEST_CASE("file URLs and provider failures") {
  test::TempDir dir("prov");
  io::write_file_atomic(dir / "src/19/1/2.png", "PNGDATA");
  CHECK(fetch_url("file://" + (dir / "src/19/1/2.png").string()) == "PNGDATA");
  CHECK_THROWS_AS(fetch_url("file://" + (dir / "missing.png").string()), ProviderError);
  CHECK_THROWS_AS(fetch_url("ftp://example/x"), ProviderError);

  ProviderSettings s;
  s.rate_limit_per_s = 1000.0;
  s.aerial_template = "file://" + (dir / "src").string() + "/{z}/{x}/{y}.png";
  ImageryClient client(s, dir / "cache");
  CHECK(io::read_file(client.fetch_tile({19, 1, 2})) == "PNGDATA");
  CHECK_THROWS_AS(client.fetch_tile({19, 1, 3}), ProviderError);
  // A failed fetch leaves neither a cache entry nor a ledger line.
  CHECK_FALSE(std::filesystem::exists(client.tile_path({19, 1, 3})));
  CHECK(client.ledger().size() == 1);
}

TEST_CASE("token bucket paces requests") {
  CHECK_THROWS_AS(TokenBucket(0.0), ConfigError);
  TokenBucket bucket(20.0);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 30; ++i) bucket.acquire();
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  // 20 tokens are available up front; the other 10 arrive at 20 per second.
  CHECK(elapsed >= 0.45);
  CHECK(elapsed < 2.0);
}

TEST_CASE("parallel_for runs every index once and reports the lowest failure") {
  for (std::size_t workers : {1u, 3u, 8u}) {
    std::vector<std::atomic<int>> hits(500);
    parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (const auto& h : hits) CHECK(h.load() == 1);

    try {
      parallel_for(100, workers, [](std::size_t i) {
        if (i >= 5) throw std::runtime_error(std::to_string(i));
      });
      FAIL("expected a failure");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "5");
    }
  }
  parallel_for(0, 4, [](std::size_t) { FAIL("no jobs expected"); });
}
