#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "palmscan/dates.hpp"
#include "palmscan/geo.hpp"
#include "palmscan/imagery.hpp"

namespace palmscan::linker {

inline constexpr double kDefaultVisibilityRadiusM = 50.0;

PanoramaRecord nearest_panorama(const geo::GeoPoint& tree, const std::vector<PanoramaRecord>& panos);

// Heading that points a camera at `pano` toward `tree`.
double camera_heading(const geo::GeoPoint& pano, const geo::GeoPoint& tree);

// Angular offset of a crown from the optical axis:
// fov * center_x / image_width - fov / 2 (fov 90 gives 90*c/640 - 45).
double pixel_shift_deg(const geo::PixelBox& crown_box, int image_width = kStreetImageSize, double fov = kDefaultFov);
double pixel_shift_for_center(double center_x, int image_width = kStreetImageSize, double fov = kDefaultFov);

struct OriginalView {
  PanoramaRecord pano;
  double heading = 0.0;
  geo::PixelBox crown_box;
};

// Aims a historical capture at the tree. When the historical panorama is
// farther from the tree than the original one the plain bearing is used;
// otherwise the crown's offset in the original image is added to it.
StreetImageRequest recenter_heading(const geo::GeoPoint& tree, const OriginalView& original,
                                    const PanoramaRecord& historical);

// Spatial lookup over a panorama catalog.
class PanoramaIndex {
 public:
  PanoramaIndex(std::vector<PanoramaRecord> panos, double radius_m);

  const std::vector<PanoramaRecord>& panoramas() const noexcept { return panos_; }
  double radius_m() const noexcept { return radius_m_; }
  std::optional<PanoramaRecord> find(const std::string& pano_id) const;

  // Every panorama within radius_m of p, ordered by pano_id.
  std::vector<PanoramaRecord> within(const geo::GeoPoint& p) const;

  // Newest capture within range, nearest among that date (ties: pano_id).
  std::optional<PanoramaRecord> current_for(const geo::GeoPoint& tree) const;

  // For each capture date other than `exclude_date`, the nearest panorama of
  // that date within range; ordered by date.
  std::vector<PanoramaRecord> historical_for(const geo::GeoPoint& tree, const YearMonth& exclude_date) const;

 private:
  std::vector<PanoramaRecord> panos_;
  double radius_m_;
  geo::GridIndex index_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Crown box whose center is nearest the optical axis, when that center lies
// within a quarter image width of it.
std::optional<geo::PixelBox> pick_target_crown(const std::vector<geo::PixelBox>& boxes,
                                               int image_width = kStreetImageSize);

}  // namespace palmscan::linker
