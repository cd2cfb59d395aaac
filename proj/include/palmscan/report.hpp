#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "palmscan/geo.hpp"
#include "palmscan/io.hpp"
#include "palmscan/planner.hpp"
#include "palmscan/registry.hpp"
#include "palmscan/timeline.hpp"

namespace palmscan::report {

inline constexpr double kDefaultCellSizeM = 100.0;
inline constexpr std::int64_t kMicroUsd = 1'000'000;
inline constexpr std::int64_t kStreetImageCostMicroUsd = 7'000;  // 0.007 USD

// Square cells in Web Mercator meters, anchored at the AOI's north-west
// corner. Cell (row, col) covers x in [x0 + col*s, x0 + (col+1)*s) and
// y in (y0 - (row+1)*s, y0 - row*s], with s the ground cell size scaled by
// 1/cos of the AOI's center latitude.
struct HeatmapGrid {
  geo::GeoPoint origin;  // north-west corner
  double cell_size_m = kDefaultCellSizeM;
  double cell_mercator_m = kDefaultCellSizeM;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::int64_t> counts;  // row-major, row 0 northmost
  std::int64_t remainder = 0;        // trees outside the AOI

  std::int64_t at(std::int64_t row, std::int64_t col) const { return counts.at(row * cols + col); }
  std::int64_t total() const noexcept;
  geo::GeoBox cell_bounds(std::int64_t row, std::int64_t col) const;
};

HeatmapGrid build_heatmap(const std::vector<registry::TreeRecord>& trees, const planner::AreaOfInterest& aoi,
                          double cell_size_m = kDefaultCellSizeM);

struct Hotspot {
  std::int64_t row = 0;
  std::int64_t col = 0;
  std::int64_t count = 0;
  bool operator==(const Hotspot&) const = default;
};

// Cells with count >= min_count, by count descending then cell index.
std::vector<Hotspot> hotspots(const HeatmapGrid& grid, std::int64_t min_count);

Json to_json(const HeatmapGrid& grid);

struct CostInputs {
  std::int64_t panoramas_needed = 0;
  std::int64_t views_per_panorama = 4;
  std::int64_t aerial_tiles = 0;
  std::int64_t street_images_for_detected = 0;
  std::int64_t street_unit_cost_micro = kStreetImageCostMicroUsd;
  std::int64_t aerial_unit_cost_micro = 0;
};

struct CostReport {
  std::int64_t street_only_images = 0;
  std::int64_t combined_street_images = 0;
  std::int64_t combined_aerial_tiles = 0;
  std::int64_t street_only_cost_micro = 0;
  std::int64_t combined_cost_micro = 0;
  std::optional<double> reduction_factor;  // undefined with zero combined images

  // Exact test of street_only >= k * combined.
  bool reduces_at_least(std::int64_t k) const noexcept {
    return combined_street_images > 0 && street_only_images >= k * combined_street_images;
  }
};

CostReport cost_comparison(const CostInputs& in);
Json to_json(const CostReport& c);

// "31.808000" style rendering of a micro-dollar amount.
std::string usd(std::int64_t micro);

// FeatureCollection of tree points ordered by id, with properties
// {id, status, transition, source}.
Json export_geojson(const std::vector<registry::TreeRecord>& trees);

struct Summary {
  std::int64_t trees = 0;
  std::int64_t aerial = 0;
  std::int64_t street_only = 0;
  std::map<std::string, std::int64_t> street_status;
  std::map<std::string, std::int64_t> timeline_status;
  std::optional<double> confirmable_ratio;  // confirmed / aerial trees that reached street level
};

Summary summarize(const std::vector<registry::TreeRecord>& trees);
Json to_json(const Summary& s);

// One line per tree: id, location, status, transition and labelled points.
std::string timelines_jsonl(const std::vector<registry::TreeRecord>& trees);

// Static HTML page with summary, cost table, hotspots and the heatmap as a
// plain table.
std::string render_html(const Summary& s, const HeatmapGrid& grid, const std::vector<Hotspot>& spots,
                        const CostReport& cost);

}  // namespace palmscan::report
