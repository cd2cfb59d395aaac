#include "palmscan/geo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "palmscan/errors.hpp"

namespace palmscan::geo {

namespace {

#if defined(__SIZEOF_FLOAT128__)
__extension__ typedef __float128 Wide;
#else
typedef long double Wide;
#endif

double world_tiles(int zoom) { return std::ldexp(1.0, zoom); }

void require_tile(const TileId& t) {
  if (!t.valid()) {
    throw DomainError("invalid tile z=" + std::to_string(t.zoom) + " x=" + std::to_string(t.x) +
                      " y=" + std::to_string(t.y));
  }
}

}  // namespace

bool TileId::valid() const noexcept {
  if (zoom < 0 || zoom > kMaxZoom) return false;
  const std::int64_t n = std::int64_t{1} << zoom;
  return x >= 0 && x < n && y >= 0 && y < n;
}

bool PixelBox::valid_within(double image_width, double image_height) const noexcept {
  return x_min < x_max && y_min < y_max && x_min >= 0.0 && y_min >= 0.0 && x_max <= image_width &&
         y_max <= image_height;
}

double normalize_lon(double lon) noexcept {
  double r = std::fmod(lon + 180.0, 360.0);
  if (r < 0) r += 360.0;
  r -= 180.0;
  return r >= 180.0 ? -180.0 : r;
}

double normalize_heading(double deg) noexcept {
  double r = std::fmod(deg, 360.0);
  if (r < 0) r += 360.0;
  return r >= 360.0 ? 0.0 : r;
}

MercatorPoint geo_to_mercator(const GeoPoint& p) {
  if (!(std::abs(p.lat) <= kMaxMercatorLat) || !std::isfinite(p.lon)) {
    throw DomainError("latitude " + std::to_string(p.lat) + " outside Web Mercator validity");
  }
  const double x = kMercatorRadius * deg2rad(p.lon);
  const double y = std::clamp(kMercatorRadius * std::asinh(std::tan(deg2rad(p.lat))), -kMercatorHalfWorld,
                              kMercatorHalfWorld);
  return {x, y};
}

GeoPoint mercator_to_geo(const MercatorPoint& m) {
  // One part in 1e12 of slack absorbs the rounding of pi * R.
  constexpr double kLimit = kMercatorHalfWorld * (1.0 + 1e-12);
  if (!(std::abs(m.x) <= kLimit) || !(std::abs(m.y) <= kLimit)) {
    throw DomainError("mercator point outside world bounds");
  }
  return {rad2deg(std::atan(std::sinh(m.y / kMercatorRadius))), rad2deg(m.x / kMercatorRadius)};
}

GeoBox tile_bounds(const TileId& t) {
  require_tile(t);
  const double n = world_tiles(t.zoom);
  const auto lon_of = [n](double x) { return x / n * 360.0 - 180.0; };
  // Same operation order as the reference slippy-map formulas, so tile
  // corners agree bit for bit with other tools.
  const auto lat_of = [n](double y) {
    const double k = kPi - 2.0 * kPi * y / n;
    return 180.0 / kPi * std::atan(0.5 * (std::exp(k) - std::exp(-k)));
  };
  const double x = static_cast<double>(t.x);
  const double y = static_cast<double>(t.y);
  return {lat_of(y + 1.0), lon_of(x), lat_of(y), lon_of(x + 1.0)};
}

namespace {

// Global pixel offsets need ~80 bits for an arbitrary double pixel at high
// zoom; in quad precision they are exact and the result rounds only once.
MercatorPoint wide_pixel_to_mercator(const TileId& t, Wide px, Wide py, int tile_size) {
  const Wide size = tile_size;
  const Wide span = size * static_cast<Wide>(world_tiles(t.zoom));
  const Wide u = (static_cast<Wide>(t.x) * size + px) / span;
  const Wide v = (static_cast<Wide>(t.y) * size + py) / span;
  const Wide h = kMercatorHalfWorld;
  return {static_cast<double>((2 * u - 1) * h), static_cast<double>((1 - 2 * v) * h)};
}

}  // namespace

MercatorPoint pixel_to_mercator(const TileId& t, PixelPoint px, int tile_size) {
  require_tile(t);
  if (tile_size <= 0) throw DomainError("tile size must be positive");
  const double size = tile_size;
  if (!(px.x >= 0.0 && px.x <= size && px.y >= 0.0 && px.y <= size)) {
    throw DomainError("pixel (" + std::to_string(px.x) + ", " + std::to_string(px.y) + ") outside tile");
  }
  return wide_pixel_to_mercator(t, px.x, px.y, tile_size);
}

MercatorPoint box_center_mercator(const TileId& t, const PixelBox& b, int tile_size) {
  require_tile(t);
  if (tile_size <= 0) throw DomainError("tile size must be positive");
  if (!b.valid_within(tile_size, tile_size)) throw DomainError("pixel box outside tile");
  // The midpoint is formed without rounding; PixelBox::center() would round.
  const Wide cx = (static_cast<Wide>(b.x_min) + static_cast<Wide>(b.x_max)) / 2;
  const Wide cy = (static_cast<Wide>(b.y_min) + static_cast<Wide>(b.y_max)) / 2;
  return wide_pixel_to_mercator(t, cx, cy, tile_size);
}

GeoPoint pixel_to_geo(const TileId& t, PixelPoint px, int tile_size) {
  return mercator_to_geo(pixel_to_mercator(t, px, tile_size));
}

GeoPoint box_center_geo(const TileId& t, const PixelBox& b, int tile_size) {
  return mercator_to_geo(box_center_mercator(t, b, tile_size));
}

PixelPoint geo_to_pixel(const TileId& t, const GeoPoint& p, int tile_size) {
  require_tile(t);
  const MercatorPoint m = geo_to_mercator(p);
  const double span = static_cast<double>(tile_size) * world_tiles(t.zoom);
  const double u = (m.x / kMercatorHalfWorld + 1.0) / 2.0;
  const double v = (1.0 - m.y / kMercatorHalfWorld) / 2.0;
  return {u * span - static_cast<double>(t.x) * tile_size, v * span - static_cast<double>(t.y) * tile_size};
}

TileId tile_for_point(const GeoPoint& p, int zoom) {
  if (zoom < 0 || zoom > kMaxZoom) throw DomainError("zoom out of range");
  const MercatorPoint m = geo_to_mercator(p);
  const double n = world_tiles(zoom);
  const std::int64_t last = (std::int64_t{1} << zoom) - 1;
  const auto idx = [&](double frac) {
    return std::clamp(static_cast<std::int64_t>(std::floor(frac * n)), std::int64_t{0}, last);
  };
  return {zoom, idx((m.x / kMercatorHalfWorld + 1.0) / 2.0), idx((1.0 - m.y / kMercatorHalfWorld) / 2.0)};
}

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  const double dlat = deg2rad(b.lat - a.lat);
  const double dlon = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(deg2rad(a.lat)) * std::cos(deg2rad(b.lat)) * s2 * s2;
  return 2.0 * kHaversineRadius * std::asin(std::min(1.0, std::sqrt(h)));
}

double bearing_deg(const GeoPoint& from, const GeoPoint& to) {
  if (from == to) throw DomainError("bearing between coincident points is undefined");
  const double phi1 = deg2rad(from.lat);
  const double phi2 = deg2rad(to.lat);
  const double dlon = deg2rad(to.lon - from.lon);
  const double y = std::sin(dlon) * std::cos(phi2);
  const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlon);
  return normalize_heading(rad2deg(std::atan2(y, x)));
}

GeoPoint destination(const GeoPoint& from, double bearing, double distance_m) {
  const double delta = distance_m / kHaversineRadius;
  const double theta = deg2rad(bearing);
  const double phi1 = deg2rad(from.lat);
  const double lambda1 = deg2rad(from.lon);
  const double phi2 =
      std::asin(std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(theta));
  const double lambda2 = lambda1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(phi1),
                                              std::cos(delta) - std::sin(phi1) * std::sin(phi2));
  return {rad2deg(phi2), normalize_lon(rad2deg(lambda2))};
}

GeoPoint interpolate_great_circle(const GeoPoint& a, const GeoPoint& b, double f) {
  const double delta = haversine_m(a, b) / kHaversineRadius;
  if (delta == 0.0) return a;
  const double phi1 = deg2rad(a.lat), lambda1 = deg2rad(a.lon);
  const double phi2 = deg2rad(b.lat), lambda2 = deg2rad(b.lon);
  const double wa = std::sin((1.0 - f) * delta) / std::sin(delta);
  const double wb = std::sin(f * delta) / std::sin(delta);
  const double x = wa * std::cos(phi1) * std::cos(lambda1) + wb * std::cos(phi2) * std::cos(lambda2);
  const double y = wa * std::cos(phi1) * std::sin(lambda1) + wb * std::cos(phi2) * std::sin(lambda2);
  const double z = wa * std::sin(phi1) + wb * std::sin(phi2);
  return {rad2deg(std::atan2(z, std::hypot(x, y))), rad2deg(std::atan2(y, x))};
}

double ground_resolution_m(double lat, int zoom, int tile_size) {
  return std::cos(deg2rad(lat)) * 2.0 * kMercatorHalfWorld / (tile_size * world_tiles(zoom));
}

GridIndex::GridIndex(double radius_m, double max_abs_lat) {
  if (!(radius_m > 0.0)) throw DomainError("grid radius must be positive");
  cell_lat_deg_ = rad2deg(radius_m / kHaversineRadius) * 1.05;
  const double lat = std::min(std::abs(max_abs_lat) + cell_lat_deg_, 89.0);
  cell_lon_deg_ = cell_lat_deg_ / std::cos(deg2rad(lat));
}

GridIndex::CellKey GridIndex::key_for(const GeoPoint& p) const noexcept {
  return {static_cast<std::int64_t>(std::floor(p.lat / cell_lat_deg_)),
          static_cast<std::int64_t>(std::floor(p.lon / cell_lon_deg_))};
}

void GridIndex::insert(std::size_t id, const GeoPoint& p) { cells_[key_for(p)].push_back(id); }

std::vector<std::size_t> GridIndex::candidates(const GeoPoint& p) const {
  std::vector<std::size_t> out;
  const CellKey k = key_for(p);
  for (std::int64_t dr = -1; dr <= 1; ++dr) {
    for (std::int64_t dc = -1; dc <= 1; ++dc) {
      auto it = cells_.find({k.row + dr, k.col + dc});
      if (it != cells_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  return out;
}

}  // namespace palmscan::geo
