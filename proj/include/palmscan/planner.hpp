#pragma once

#include <optional>
#include <string>
#include <vector>

#include "palmscan/geo.hpp"
#include "palmscan/imagery.hpp"
#include "palmscan/io.hpp"

namespace palmscan::planner {

// Survey region: an axis-aligned box or a simple polygon, both in lat/lon.
class AreaOfInterest {
 public:
  static AreaOfInterest from_box(std::string name, const geo::GeoBox& box);
  // A trailing vertex equal to the first is dropped.
  static AreaOfInterest from_polygon(std::string name, std::vector<geo::GeoPoint> ring);
  static AreaOfInterest from_json(const Json& j);

  const std::string& name() const noexcept { return name_; }
  bool is_polygon() const noexcept { return !ring_.empty(); }
  const std::vector<geo::GeoPoint>& ring() const noexcept { return ring_; }
  const geo::GeoBox& bounds() const noexcept { return bounds_; }

  // Positive-area overlap with a box; boundary contact alone does not count.
  bool overlaps(const geo::GeoBox& box) const;
  bool contains(const geo::GeoPoint& p) const;
  Json to_json() const;

 private:
  std::string name_;
  geo::GeoBox bounds_;
  std::vector<geo::GeoPoint> ring_;
};

struct TilePlan {
  int zoom = 20;
  int tile_size = kAerialTileSize;
  std::vector<geo::TileId> tiles;  // row-major: y, then x
};

struct Polyline {
  std::vector<geo::GeoPoint> vertices;
};

struct StreetSample {
  geo::GeoPoint location;
  std::vector<double> headings;
};

struct StreetSamplePlan {
  double spacing_m = 8.0;
  std::vector<StreetSample> samples;
};

inline const std::vector<double> kDefaultHeadings{0.0, 90.0, 180.0, 270.0};

TilePlan enumerate_tiles(const AreaOfInterest& aoi, int zoom, int tile_size = kAerialTileSize);

void validate_polyline(const Polyline& line);
double polyline_length_m(const Polyline& line);
std::vector<geo::GeoPoint> sample_street_points(const Polyline& line, double spacing_m = 8.0);

std::vector<StreetImageRequest> panorama_view_set(const geo::GeoPoint& p,
                                                  const std::vector<double>& headings = kDefaultHeadings,
                                                  double fov = kDefaultFov);

StreetSamplePlan plan_street_samples(const std::vector<Polyline>& streets, double spacing_m,
                                     const std::vector<double>& headings = kDefaultHeadings);

// GeoJSON FeatureCollection of LineString / MultiLineString features.
std::vector<Polyline> parse_streets_geojson(const Json& doc);
Json streets_to_geojson(const std::vector<Polyline>& streets);

Json to_json(const TilePlan& plan, const AreaOfInterest& aoi);
TilePlan tile_plan_from_json(const Json& j);
Json to_json(const StreetSamplePlan& plan);
StreetSamplePlan sample_plan_from_json(const Json& j);

}  // namespace palmscan::planner
