#pragma once

#include <optional>
#include <string>
#include <vector>

#include "palmscan/dates.hpp"
#include "palmscan/geo.hpp"
#include "palmscan/io.hpp"

namespace palmscan {

inline constexpr int kAerialTileSize = 256;
inline constexpr int kStreetImageSize = 640;  // provider maximum
inline constexpr double kDefaultFov = 90.0;

struct PanoramaRecord {
  std::string pano_id;
  geo::GeoPoint location;
  YearMonth capture_date;
};

// One rectilinear view cut out of a panorama.
struct StreetImageRequest {
  std::optional<std::string> pano_id;
  std::optional<geo::GeoPoint> location;
  double heading = 0.0;
  double fov = kDefaultFov;
  int width = kStreetImageSize;
  int height = kStreetImageSize;
};

Json to_json(const PanoramaRecord& p);
PanoramaRecord panorama_from_json(const Json& j);

// JSON-lines panorama catalog: {"pano_id","lat","lon","date"} per line.
std::vector<PanoramaRecord> parse_panorama_catalog(const std::vector<Json>& lines);
std::string write_panorama_catalog(const std::vector<PanoramaRecord>& panos);

// Heading rendered for file names and image references.
std::string heading_token(double heading);

// Image references, relative to the imagery cache root:
//   tiles/<z>/<x>/<y>.png
//   street/<pano_id>/<heading>.jpg
//   street/<pano_id>/<heading>.jpg#crop=x0,y0,x1,y1   (crown crop for classification)
std::string aerial_tile_ref(const geo::TileId& t);
std::string street_image_ref(const std::string& pano_id, double heading);
std::string crown_crop_ref(const std::string& street_ref, const geo::PixelBox& crop);

struct ParsedImageRef {
  enum class Kind { aerial, street } kind = Kind::aerial;
  geo::TileId tile;
  std::string pano_id;
  double heading = 0.0;
  std::optional<geo::PixelBox> crop;
};
// Accepts an absolute or prefixed path; the last "tiles/" or "street/"
// segment anchors the parse. Returns nullopt for anything else.
std::optional<ParsedImageRef> parse_image_ref(std::string_view ref);

}  // namespace palmscan
