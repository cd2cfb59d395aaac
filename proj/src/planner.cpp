#include "palmscan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "palmscan/errors.hpp"

namespace palmscan::planner {

namespace {

using geo::GeoBox;
using geo::GeoPoint;

double cross(const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) {
  return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

bool on_segment(const GeoPoint& a, const GeoPoint& b, const GeoPoint& p) {
  return std::min(a.lon, b.lon) <= p.lon && p.lon <= std::max(a.lon, b.lon) && std::min(a.lat, b.lat) <= p.lat &&
         p.lat <= std::max(a.lat, b.lat);
}

// Closed segment intersection, touching included.
bool segments_intersect(const GeoPoint& a, const GeoPoint& b, const GeoPoint& c, const GeoPoint& d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(c, d, a)) return true;
  if (d2 == 0 && on_segment(c, d, b)) return true;
  if (d3 == 0 && on_segment(a, b, c)) return true;
  if (d4 == 0 && on_segment(a, b, d)) return true;
  return false;
}

bool strictly_inside(const GeoBox& box, const GeoPoint& p) {
  return p.lon > box.west && p.lon < box.east && p.lat > box.south && p.lat < box.north;
}

// Liang-Barsky clip against the closed box, then ask whether the clipped
// piece reaches the open interior.
bool segment_enters_interior(const GeoPoint& a, const GeoPoint& b, const GeoBox& box) {
  double t0 = 0.0, t1 = 1.0;
  const double dx = b.lon - a.lon, dy = b.lat - a.lat;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {a.lon - box.west, box.east - a.lon, a.lat - box.south, box.north - a.lat};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
    if (t0 > t1) return false;
  }
  if (t0 >= t1) return false;
  const double tm = (t0 + t1) / 2.0;
  return strictly_inside(box, {a.lat + tm * dy, a.lon + tm * dx});
}

bool point_in_ring(const std::vector<GeoPoint>& ring, const GeoPoint& p) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const auto& a = ring[i];
    const auto& b = ring[j];
    if ((a.lat > p.lat) != (b.lat > p.lat)) {
      const double x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
      if (p.lon < x) inside = !inside;
    }
  }
  return inside;
}

void require_mercator_lat(const GeoPoint& p) {
  if (!(std::abs(p.lat) <= geo::kMaxMercatorLat) || !(p.lon >= -180.0 && p.lon <= 180.0)) {
    throw DomainError("AOI vertex (" + std::to_string(p.lat) + ", " + std::to_string(p.lon) +
                      ") outside Web Mercator validity");
  }
}

Json point_json(const GeoPoint& p) { return Json::array({p.lon, p.lat}); }

}  // namespace

AreaOfInterest AreaOfInterest::from_box(std::string name, const GeoBox& box) {
  if (!box.valid()) throw DomainError("AOI box must satisfy south < north and west < east");
  require_mercator_lat({box.south, box.west});
  require_mercator_lat({box.north, box.east});
  AreaOfInterest aoi;
  aoi.name_ = std::move(name);
  aoi.bounds_ = box;
  return aoi;
}

AreaOfInterest AreaOfInterest::from_polygon(std::string name, std::vector<GeoPoint> ring) {
  if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
  if (ring.size() < 3) throw DomainError("AOI polygon needs at least 3 distinct vertices");
  for (const auto& v : ring) require_mercator_lat(v);
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (ring[i] == ring[(i + 1) % n]) throw DomainError("AOI polygon has repeated consecutive vertices");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n])) {
        throw DomainError("AOI polygon is self-intersecting");
      }
    }
  }
  GeoBox b{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
           std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest()};
  for (const auto& v : ring) {
    b.south = std::min(b.south, v.lat);
    b.north = std::max(b.north, v.lat);
    b.west = std::min(b.west, v.lon);
    b.east = std::max(b.east, v.lon);
  }
  if (!b.valid()) throw DomainError("AOI polygon has zero area");
  AreaOfInterest aoi;
  aoi.name_ = std::move(name);
  aoi.bounds_ = b;
  aoi.ring_ = std::move(ring);
  return aoi;
}

AreaOfInterest AreaOfInterest::from_json(const Json& j) {
  try {
    const std::string name = j.value("name", std::string("aoi"));
    if (j.contains("box")) {
      const auto& b = j.at("box");
      return from_box(name, {b.at("south").get<double>(), b.at("west").get<double>(), b.at("north").get<double>(),
                             b.at("east").get<double>()});
    }
    if (j.contains("polygon")) {
      std::vector<GeoPoint> ring;
      for (const auto& v : j.at("polygon")) ring.push_back({v.at(1).get<double>(), v.at(0).get<double>()});
      return from_polygon(name, std::move(ring));
    }
  } catch (const Json::exception& e) {
    throw DomainError(std::string("bad AOI: ") + e.what());
  }
  throw DomainError("AOI needs a \"box\" or a \"polygon\"");
}

Json AreaOfInterest::to_json() const {
  Json j;
  j["name"] = name_;
  if (is_polygon()) {
    Json ring_json = Json::array();
    for (const auto& v : ring_) ring_json.push_back(point_json(v));
    j["polygon"] = ring_json;
  } else {
    j["box"] = {{"south", bounds_.south}, {"west", bounds_.west}, {"north", bounds_.north}, {"east", bounds_.east}};
  }
  return j;
}

bool AreaOfInterest::overlaps(const GeoBox& box) const {
  if (!(box.west < bounds_.east && bounds_.west < box.east && box.south < bounds_.north && bounds_.south < box.north)) {
    return false;
  }
  if (!is_polygon()) return true;
  const std::size_t n = ring_.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (segment_enters_interior(ring_[i], ring_[(i + 1) % n], box)) return true;
  }
  // No edge reaches the box interior: the box is entirely in or entirely out.
  return point_in_ring(ring_, {(box.south + box.north) / 2.0, (box.west + box.east) / 2.0});
}

bool AreaOfInterest::contains(const GeoPoint& p) const {
  if (!is_polygon()) return bounds_.contains_half_open(p);
  return bounds_.contains_closed(p) && point_in_ring(ring_, p);
}

TilePlan enumerate_tiles(const AreaOfInterest& aoi, int zoom, int tile_size) {
  if (zoom < 0 || zoom > 22) throw DomainError("zoom must be in [0, 22]");
  if (tile_size <= 0) throw DomainError("tile size must be positive");
  const auto& b = aoi.bounds();
  const auto nw = geo::tile_for_point({b.north, b.west}, zoom);
  const auto se = geo::tile_for_point({b.south, b.east}, zoom);
  const std::int64_t last = (std::int64_t{1} << zoom) - 1;
  TilePlan plan;
  plan.zoom = zoom;
  plan.tile_size = tile_size;
  for (std::int64_t y = std::max<std::int64_t>(0, nw.y - 1); y <= std::min(last, se.y + 1); ++y) {
    for (std::int64_t x = std::max<std::int64_t>(0, nw.x - 1); x <= std::min(last, se.x + 1); ++x) {
      const geo::TileId t{zoom, x, y};
      if (aoi.overlaps(geo::tile_bounds(t))) plan.tiles.push_back(t);
    }
  }
  return plan;
}

void validate_polyline(const Polyline& line) {
  if (line.vertices.size() < 2) throw DomainError("polyline needs at least 2 vertices");
  for (std::size_t i = 0; i + 1 < line.vertices.size(); ++i) {
    if (line.vertices[i] == line.vertices[i + 1]) throw DomainError("polyline has repeated consecutive vertices");
  }
}

double polyline_length_m(const Polyline& line) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < line.vertices.size(); ++i) {
    total += geo::haversine_m(line.vertices[i], line.vertices[i + 1]);
  }
  return total;
}

std::vector<GeoPoint> sample_street_points(const Polyline& line, double spacing_m) {
  if (!(spacing_m > 0.0)) throw DomainError("sample spacing must be positive");
  validate_polyline(line);
  constexpr double kEndSlack = 1e-6;
  std::vector<GeoPoint> out{line.vertices.front()};
  double next = spacing_m;
  double walked = 0.0;
  for (std::size_t i = 0; i + 1 < line.vertices.size(); ++i) {
    const auto& a = line.vertices[i];
    const auto& b = line.vertices[i + 1];
    const double seg = geo::haversine_m(a, b);
    while (next <= walked + seg + kEndSlack) {
      const double f = std::clamp((next - walked) / seg, 0.0, 1.0);
      out.push_back(geo::interpolate_great_circle(a, b, f));
      next += spacing_m;
    }
    walked += seg;
  }
  return out;
}

std::vector<StreetImageRequest> panorama_view_set(const GeoPoint& p, const std::vector<double>& headings,
                                                  double fov) {
  if (!(fov > 0.0 && fov <= 120.0)) throw DomainError("fov must be in (0, 120]");
  std::vector<StreetImageRequest> out;
  out.reserve(headings.size());
  for (double h : headings) {
    if (!(h >= 0.0 && h < 360.0)) throw DomainError("heading must be in [0, 360)");
    StreetImageRequest r;
    r.location = p;
    r.heading = h;
    r.fov = fov;
    out.push_back(r);
  }
  return out;
}

StreetSamplePlan plan_street_samples(const std::vector<Polyline>& streets, double spacing_m,
                                     const std::vector<double>& headings) {
  StreetSamplePlan plan;
  plan.spacing_m = spacing_m;
  for (const auto& line : streets) {
    for (const auto& p : sample_street_points(line, spacing_m)) plan.samples.push_back({p, headings});
  }
  return plan;
}

std::vector<Polyline> parse_streets_geojson(const Json& doc) {
  std::vector<Polyline> out;
  const auto add_line = [&out](const Json& coords) {
    Polyline line;
    for (const auto& c : coords) {
      const GeoPoint p{c.at(1).get<double>(), c.at(0).get<double>()};
      if (line.vertices.empty() || !(line.vertices.back() == p)) line.vertices.push_back(p);
    }
    validate_polyline(line);
    out.push_back(std::move(line));
  };
  try {
    if (doc.value("type", std::string()) != "FeatureCollection") {
      throw DomainError("street layer must be a GeoJSON FeatureCollection");
    }
    for (const auto& f : doc.at("features")) {
      const auto& g = f.at("geometry");
      if (g.is_null()) continue;
      const auto type = g.at("type").get<std::string>();
      if (type == "LineString") {
        add_line(g.at("coordinates"));
      } else if (type == "MultiLineString") {
        for (const auto& part : g.at("coordinates")) add_line(part);
      }
    }
  } catch (const Json::exception& e) {
    throw DomainError(std::string("bad street GeoJSON: ") + e.what());
  }
  return out;
}

Json streets_to_geojson(const std::vector<Polyline>& streets) {
  Json features = Json::array();
  for (const auto& s : streets) {
    Json coords = Json::array();
    for (const auto& v : s.vertices) coords.push_back(point_json(v));
    Json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "LineString"}, {"coordinates", coords}};
    f["properties"] = Json::object();
    features.push_back(f);
  }
  Json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = features;
  return doc;
}

Json to_json(const TilePlan& plan, const AreaOfInterest& aoi) {
  Json tiles = Json::array();
  for (const auto& t : plan.tiles) tiles.push_back(Json::array({t.x, t.y}));
  Json j;
  j["schema_version"] = 1;
  j["aoi"] = aoi.to_json();
  j["zoom"] = plan.zoom;
  j["tile_size"] = plan.tile_size;
  j["tile_count"] = plan.tiles.size();
  j["tiles"] = tiles;
  return j;
}

TilePlan tile_plan_from_json(const Json& j) {
  TilePlan plan;
  plan.zoom = j.at("zoom").get<int>();
  plan.tile_size = j.at("tile_size").get<int>();
  for (const auto& t : j.at("tiles")) plan.tiles.push_back({plan.zoom, t.at(0).get<std::int64_t>(), t.at(1).get<std::int64_t>()});
  return plan;
}

Json to_json(const StreetSamplePlan& plan) {
  Json samples = Json::array();
  for (const auto& s : plan.samples) {
    Json item;
    item["lat"] = s.location.lat;
    item["lon"] = s.location.lon;
    item["headings"] = s.headings;
    samples.push_back(item);
  }
  Json j;
  j["schema_version"] = 1;
  j["spacing_m"] = plan.spacing_m;
  j["sample_count"] = plan.samples.size();
  j["samples"] = samples;
  return j;
}

StreetSamplePlan sample_plan_from_json(const Json& j) {
  StreetSamplePlan plan;
  plan.spacing_m = j.at("spacing_m").get<double>();
  for (const auto& s : j.at("samples")) {
    plan.samples.push_back({{s.at("lat").get<double>(), s.at("lon").get<double>()}, s.at("headings").get<std::vector<double>>()});
  }
  return plan;
}

}  // namespace palmscan::planner
