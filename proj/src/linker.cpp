#include "palmscan/linker.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "palmscan/errors.hpp"

namespace palmscan::linker {

namespace {

bool closer(const PanoramaRecord& a, double da, const PanoramaRecord& b, double db) {
  if (da != db) return da < db;
  return a.pano_id < b.pano_id;
}

double max_abs_lat(const std::vector<PanoramaRecord>& panos) {
  double m = 0.0;
  for (const auto& p : panos) m = std::max(m, std::abs(p.location.lat));
  return m;
}

}  // namespace

PanoramaRecord nearest_panorama(const geo::GeoPoint& tree, const std::vector<PanoramaRecord>& panos) {
  if (panos.empty()) throw DomainError("nearest_panorama needs at least one panorama");
  const PanoramaRecord* best = &panos.front();
  double best_d = geo::haversine_m(tree, best->location);
  for (const auto& p : panos) {
    const double d = geo::haversine_m(tree, p.location);
    if (closer(p, d, *best, best_d)) {
      best = &p;
      best_d = d;
    }
  }
  return *best;
}

double camera_heading(const geo::GeoPoint& pano, const geo::GeoPoint& tree) { return geo::bearing_deg(pano, tree); }

double pixel_shift_for_center(double center_x, int image_width, double fov) {
  return fov * center_x / image_width - fov / 2.0;
}

double pixel_shift_deg(const geo::PixelBox& crown_box, int image_width, double fov) {
  if (!(crown_box.x_min >= 0.0 && crown_box.x_min <= crown_box.x_max && crown_box.x_max <= image_width)) {
    throw DomainError("crown box outside the image");
  }
  return pixel_shift_for_center((crown_box.x_min + crown_box.x_max) / 2.0, image_width, fov);
}

StreetImageRequest recenter_heading(const geo::GeoPoint& tree, const OriginalView& original,
                                    const PanoramaRecord& historical) {
  if (historical.location == tree) throw DomainError("historical panorama " + historical.pano_id + " sits on the tree");
  const double aim = camera_heading(historical.location, tree);
  const bool farther = geo::haversine_m(historical.location, tree) > geo::haversine_m(original.pano.location, tree);
  StreetImageRequest req;
  req.pano_id = historical.pano_id;
  req.location = historical.location;
  req.heading = farther ? aim : geo::normalize_heading(aim + pixel_shift_deg(original.crown_box));
  return req;
}

PanoramaIndex::PanoramaIndex(std::vector<PanoramaRecord> panos, double radius_m)
    : panos_(std::move(panos)), radius_m_(radius_m), index_(radius_m, max_abs_lat(panos_)) {
  for (std::size_t i = 0; i < panos_.size(); ++i) {
    index_.insert(i, panos_[i].location);
    if (!by_id_.emplace(panos_[i].pano_id, i).second) throw DomainError("duplicate pano_id " + panos_[i].pano_id);
  }
}

std::optional<PanoramaRecord> PanoramaIndex::find(const std::string& pano_id) const {
  auto it = by_id_.find(pano_id);
  if (it == by_id_.end()) return std::nullopt;
  return panos_[it->second];
}

std::vector<PanoramaRecord> PanoramaIndex::within(const geo::GeoPoint& p) const {
  std::vector<PanoramaRecord> out;
  for (std::size_t i : index_.candidates(p)) {
    if (geo::haversine_m(p, panos_[i].location) <= radius_m_) out.push_back(panos_[i]);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.pano_id < b.pano_id; });
  return out;
}

std::optional<PanoramaRecord> PanoramaIndex::current_for(const geo::GeoPoint& tree) const {
  auto near = within(tree);
  if (near.empty()) return std::nullopt;
  const YearMonth newest =
      std::max_element(near.begin(), near.end(), [](const auto& a, const auto& b) { return a.capture_date < b.capture_date; })
          ->capture_date;
  std::erase_if(near, [&](const PanoramaRecord& p) { return p.capture_date != newest; });
  return nearest_panorama(tree, near);
}

std::vector<PanoramaRecord> PanoramaIndex::historical_for(const geo::GeoPoint& tree, const YearMonth& exclude_date) const {
  std::map<YearMonth, std::vector<PanoramaRecord>> by_date;
  for (auto& p : within(tree)) {
    if (p.capture_date != exclude_date) by_date[p.capture_date].push_back(std::move(p));
  }
  std::vector<PanoramaRecord> out;
  for (const auto& [date, group] : by_date) out.push_back(nearest_panorama(tree, group));
  return out;
}

std::optional<geo::PixelBox> pick_target_crown(const std::vector<geo::PixelBox>& boxes, int image_width) {
  const double axis = image_width / 2.0;
  std::optional<geo::PixelBox> best;
  double best_off = 0.0;
  for (const auto& b : boxes) {
    const double off = std::abs(b.center().x - axis);
    if (!best || off < best_off || (off == best_off && b < *best)) {
      best = b;
      best_off = off;
    }
  }
  if (best && best_off <= image_width / 4.0) return best;
  return std::nullopt;
}

}  // namespace palmscan::linker
