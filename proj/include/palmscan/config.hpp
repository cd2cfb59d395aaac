#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "palmscan/gateway.hpp"
#include "palmscan/io.hpp"
#include "palmscan/planner.hpp"
#include "palmscan/provider.hpp"
#include "palmscan/simulator.hpp"

namespace palmscan::config {

// How to reach one backend role.
struct BackendSpec {
  enum class Kind { command, mock, replay } kind = Kind::command;
  std::vector<std::string> argv;           // command
  std::filesystem::path world;             // mock
  sim::NoiseModel noise;                   // mock
  std::filesystem::path manifest;          // replay
};

struct SurveyConfig {
  planner::AreaOfInterest aoi = planner::AreaOfInterest::from_box("aoi", {0.0, 0.0, 0.001, 0.001});
  std::filesystem::path workspace;
  std::optional<std::filesystem::path> streets;     // GeoJSON street network
  std::optional<std::filesystem::path> panoramas;   // JSON-lines panorama catalog
  int zoom = 20;
  int tile_size = kAerialTileSize;
  int street_image_size = kStreetImageSize;
  double fov = kDefaultFov;
  double sample_spacing_m = 8.0;
  std::vector<double> headings = planner::kDefaultHeadings;
  double score_threshold = gateway::kDefaultScoreThreshold;
  double dedup_radius_m = 3.0;
  double visibility_radius_m = 50.0;
  std::size_t workers = 4;
  std::optional<BackendSpec> aerial_backend;
  std::optional<BackendSpec> street_backend;
  std::optional<BackendSpec> classify_backend;
  std::chrono::milliseconds backend_timeout{30'000};
  provider::ProviderSettings provider;
  std::filesystem::path cache_dir;
  double heatmap_cell_m = 100.0;
  std::int64_t hotspot_min_count = 3;

  Json source;  // the parsed document, for digests
};

// Relative paths resolve against `base_dir`. Throws ConfigError.
SurveyConfig parse_config(const Json& doc, const std::filesystem::path& base_dir);
SurveyConfig load_config(const std::filesystem::path& path);

// Micro-dollars from a decimal USD amount; rejects negatives and sub-micro
// precision.
std::int64_t usd_to_micro(double usd);

Json to_json(const BackendSpec& b, const std::filesystem::path& base_dir);

}  // namespace palmscan::config
