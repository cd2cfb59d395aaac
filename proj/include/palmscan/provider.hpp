#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "palmscan/geo.hpp"
#include "palmscan/imagery.hpp"
#include "palmscan/io.hpp"

namespace palmscan::provider {

// Endpoint templates. "sim" makes placeholder images locally; file:// and
// http(s):// templates expand the placeholders below.
//   aerial: {z} {x} {y} {key}
//   street: {pano} {lat} {lon} {heading} {fov} {width} {height} {key}
struct ProviderSettings {
  std::string aerial_template = "sim";
  std::string street_template = "sim";
  std::string key_env = "PALMSCAN_API_KEY";
  double rate_limit_per_s = 10.0;
  std::int64_t street_unit_cost_micro = 7'000;
  std::int64_t aerial_unit_cost_micro = 0;
};

// Replace every "{name}" in `tmpl` from `vars`; unknown placeholders throw
// ConfigError.
std::string expand_template(const std::string& tmpl, const std::vector<std::pair<std::string, std::string>>& vars);

// Returns the body of a URL or throws ProviderError.
using Fetcher = std::function<std::string(const std::string& url)>;

// file:// reads the file; http(s):// goes through libcurl. HTTP 401/403
// (auth) and 429 (quota) raise ProviderError with retry guidance.
std::string fetch_url(const std::string& url);

class TokenBucket {
 public:
  explicit TokenBucket(double rate_per_s);
  void acquire();

 private:
  double rate_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

struct LedgerEntry {
  std::string kind;  // "aerial" | "street"
  std::string ref;   // cache-relative image reference
  std::string digest;
  std::int64_t cost_micro = 0;
};

// Fetches imagery into a cache laid out as
//   <cache>/tiles/<z>/<x>/<y>.png
//   <cache>/street/<pano>/<heading>.jpg
//   <cache>/meta/ledger.jsonl   (one line per paid fetch, append only)
// Cache hits are free and never touch the network or the ledger.
class ImageryClient {
 public:
  ImageryClient(ProviderSettings settings, std::filesystem::path cache_dir, Fetcher fetcher = fetch_url);

  const std::filesystem::path& cache_dir() const noexcept { return cache_; }

  std::filesystem::path tile_path(const geo::TileId& t) const;
  std::filesystem::path street_path(const std::string& pano_id, double heading) const;

  std::filesystem::path fetch_tile(const geo::TileId& t);
  std::filesystem::path fetch_street(const StreetImageRequest& req);

  std::vector<LedgerEntry> ledger() const;
  std::int64_t ledger_cost_micro() const;
  std::size_t fetched() const noexcept { return fetched_; }

 private:
  std::filesystem::path fetch(const std::string& kind, const std::string& ref, const std::string& url,
                              std::int64_t cost_micro);
  std::string api_key() const;

  ProviderSettings settings_;
  std::filesystem::path cache_;
  Fetcher fetcher_;
  TokenBucket bucket_;
  std::mutex ledger_mu_;
  std::size_t fetched_ = 0;
};

// Runs `jobs` on up to `workers` threads; rethrows the first failure by
// index after all threads stop.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job);

}  // namespace palmscan::provider
