#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace palmscan::geo {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kMercatorRadius = 6378137.0;
inline constexpr double kMercatorHalfWorld = 20037508.342789244;  // pi * kMercatorRadius
inline constexpr double kHaversineRadius = 6371000.0;
inline constexpr double kMaxMercatorLat = 85.05112878;
inline constexpr int kMaxZoom = 30;

inline constexpr double deg2rad(double d) noexcept { return d * kPi / 180.0; }
inline constexpr double rad2deg(double r) noexcept { return r * 180.0 / kPi; }

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  auto operator<=>(const GeoPoint&) const = default;
};

struct MercatorPoint {
  double x = 0.0;
  double y = 0.0;
  auto operator<=>(const MercatorPoint&) const = default;
};

struct TileId {
  int zoom = 0;
  std::int64_t x = 0;
  std::int64_t y = 0;
  auto operator<=>(const TileId&) const = default;

  bool valid() const noexcept;
};

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
};

// Pixel rectangle, origin at the top-left of the source image.
struct PixelBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  auto operator<=>(const PixelBox&) const = default;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  PixelPoint center() const noexcept { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
  bool valid_within(double image_width, double image_height) const noexcept;
};

struct GeoBox {
  double south = 0.0;
  double west = 0.0;
  double north = 0.0;
  double east = 0.0;
  auto operator<=>(const GeoBox&) const = default;

  bool valid() const noexcept { return south < north && west < east; }
  // Half-open: [west, east) x (south, north].
  bool contains_half_open(const GeoPoint& p) const noexcept {
    return p.lon >= west && p.lon < east && p.lat > south && p.lat <= north;
  }
  bool contains_closed(const GeoPoint& p) const noexcept {
    return p.lon >= west && p.lon <= east && p.lat >= south && p.lat <= north;
  }
};

double normalize_lon(double lon) noexcept;
double normalize_heading(double deg) noexcept;

MercatorPoint geo_to_mercator(const GeoPoint& p);
GeoPoint mercator_to_geo(const MercatorPoint& m);

GeoBox tile_bounds(const TileId& t);

// Affine map of a tile-local pixel onto EPSG:3857 meters. The world
// fraction is formed in extended precision and rounded to double once.
MercatorPoint pixel_to_mercator(const TileId& t, PixelPoint px, int tile_size);
GeoPoint pixel_to_geo(const TileId& t, PixelPoint px, int tile_size);
// Center of a box within the tile, projected without rounding the midpoint.
MercatorPoint box_center_mercator(const TileId& t, const PixelBox& b, int tile_size);
GeoPoint box_center_geo(const TileId& t, const PixelBox& b, int tile_size);

// Inverse of pixel_to_mercator; the pixel may fall outside [0, tile_size].
PixelPoint geo_to_pixel(const TileId& t, const GeoPoint& p, int tile_size);
// Tile containing p at zoom, using the half-open convention.
TileId tile_for_point(const GeoPoint& p, int zoom);

double haversine_m(const GeoPoint& a, const GeoPoint& b);
// Initial great-circle bearing, degrees clockwise from north in [0, 360).
double bearing_deg(const GeoPoint& from, const GeoPoint& to);
// Point reached travelling distance_m along the great circle at bearing.
GeoPoint destination(const GeoPoint& from, double bearing, double distance_m);
// Point at fraction f of the great-circle arc from a to b.
GeoPoint interpolate_great_circle(const GeoPoint& a, const GeoPoint& b, double f);

// Ground size of one pixel in meters at zoom/tile_size near latitude lat.
double ground_resolution_m(double lat, int zoom, int tile_size);

// Uniform lat/lon bucket grid for radius queries. Cells are sized so every
// point within `radius_m` of a query lies in the 3x3 neighborhood.
class GridIndex {
 public:
  GridIndex(double radius_m, double max_abs_lat);

  void insert(std::size_t id, const GeoPoint& p);
  // Ids of every inserted point whose cell neighbors p's cell; callers apply
  // the exact distance test.
  std::vector<std::size_t> candidates(const GeoPoint& p) const;
  void clear() { cells_.clear(); }

 private:
  struct CellKey {
    std::int64_t row;
    std::int64_t col;
    bool operator==(const CellKey&) const = default;
  };
  struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept {
      return std::hash<std::int64_t>{}(k.row * 73856093) ^ std::hash<std::int64_t>{}(k.col * 19349663);
    }
  };
  CellKey key_for(const GeoPoint& p) const noexcept;

  double cell_lat_deg_;
  double cell_lon_deg_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

}  // namespace palmscan::geo
