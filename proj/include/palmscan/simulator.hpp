#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "palmscan/classification.hpp"
#include "palmscan/dates.hpp"
#include "palmscan/gateway.hpp"
#include "palmscan/geo.hpp"
#include "palmscan/imagery.hpp"
#include "palmscan/planner.hpp"
#include "palmscan/registry.hpp"

namespace palmscan::sim {

struct WorldParams {
  geo::GeoPoint origin{32.7500, -117.1300};  // south-west street corner
  int blocks_east = 3;
  int blocks_north = 3;
  double block_m = 100.0;
  double street_jitter_m = 3.0;  // per intersection, each axis
  // Palms sit in slots along both street sides, clear of intersections.
  double palm_spacing_m = 10.0;
  double palm_offset_m = 6.0;
  double intersection_clearance_m = 20.0;
  // Either a density over the AOI (palms per km^2, Bernoulli per slot) or
  // an exact count drawn from the slots.
  double palm_density_per_km2 = 1500.0;
  std::optional<int> palm_count;
  double crown_diameter_m = 6.0;
  double infested_fraction = 0.3;
  double pano_spacing_m = 8.0;
  double pano_jitter_m = 1.0;
  std::vector<YearMonth> capture_dates{{2015, 2}, {2016, 4}, {2017, 11}, {2018, 4}, {2019, 4}};
  double visibility_radius_m = 50.0;
  double aoi_margin_m = 20.0;

  void validate() const;  // throws DomainError
};

struct Palm {
  geo::GeoPoint location;
  std::optional<YearMonth> onset;  // first month the crown shows infestation

  bool infested_at(const YearMonth& d) const noexcept { return onset && *onset <= d; }
};

struct SyntheticWorld {
  std::uint64_t seed = 0;
  WorldParams params;
  geo::GeoBox aoi;
  std::vector<planner::Polyline> streets;
  std::vector<Palm> palms;
  std::vector<PanoramaRecord> panoramas;
  double visibility_radius_m = 50.0;
  double crown_diameter_m = 6.0;

  std::size_t slot_count = 0;  // palm slots the placement drew from
};

SyntheticWorld generate_world(std::uint64_t seed, const WorldParams& params = {});

Json to_json(const SyntheticWorld& w);
SyntheticWorld world_from_json(const Json& j);

// Palms with at least one panorama within the visibility radius.
std::size_t street_visible_count(const SyntheticWorld& w);

struct NoiseModel {
  double miss_rate = 0.0;            // aerial detections dropped
  double false_positive_rate = 0.0;  // Poisson mean per aerial tile
  double bbox_jitter_sigma = 0.0;    // pixels, per box coordinate
  // Row = true state, column = reported label, order healthy/infested/unknown.
  std::array<std::array<double, 3>, 3> confusion{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  void validate() const;  // throws DomainError
  static NoiseModel zero() { return {}; }
};

Json to_json(const NoiseModel& n);
NoiseModel noise_from_json(const Json& j);

// Geometry-backed protocol responder. Pure in (world, noise, request line):
// the noise stream is keyed by the seed and the image reference, so answers
// do not depend on request ids, order or concurrency.
class MockBackend {
 public:
  MockBackend(std::shared_ptr<const SyntheticWorld> world, NoiseModel noise);

  std::string handle(const std::string& line) const;

  std::vector<gateway::Detection> detect(const std::string& image_ref) const;
  ClassificationResult classify(const std::string& image_ref) const;

 private:
  std::vector<gateway::Detection> detect_aerial(const std::string& ref, const geo::TileId& tile) const;
  std::vector<gateway::Detection> detect_street(const std::string& ref, const PanoramaRecord& pano, double heading) const;

  std::shared_ptr<const SyntheticWorld> world_;
  NoiseModel noise_;
  std::unordered_map<std::string, std::size_t> pano_by_id_;
};

gateway::ChannelFactory mock_factory(std::shared_ptr<const SyntheticWorld> world, const NoiseModel& noise);

// Answers protocol lines from `in` until EOF.
void serve(const MockBackend& backend, std::istream& in, std::ostream& out);

// Writes world.json, streets.geojson, panoramas.jsonl and config.json into
// `out` with every backend role wired to the mock. A non-empty `serve_argv`
// runs the mock as `serve_argv... --world <world.json> --noise <json>`
// subprocesses instead. Returns the config path.
std::filesystem::path write_scenario(const SyntheticWorld& w, const NoiseModel& noise, const std::filesystem::path& out,
                                     std::size_t workers, const std::vector<std::string>& serve_argv = {});

// Replay manifest holding the mock's answers for the given references.
Json replay_manifest(const MockBackend& backend, const std::vector<std::string>& detect_refs,
                     const std::vector<std::string>& classify_refs);

struct RunScore {
  double recall = 0.0;
  double precision = 0.0;
  double mean_coord_error_m = 0.0;
  std::optional<double> timeline_accuracy;  // undefined without infested palms
  std::size_t matched = 0;
  std::size_t palms = 0;
  std::size_t trees = 0;
};

inline constexpr double kMatchRadiusM = 3.0;

// Pairs trees with palms greedily by ascending distance within kMatchRadiusM
// (ties: tree id, palm index).
RunScore score_run(const SyntheticWorld& w, const std::vector<registry::TreeRecord>& trees);

}  // namespace palmscan::sim
