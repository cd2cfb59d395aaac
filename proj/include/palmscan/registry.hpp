#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "palmscan/classification.hpp"
#include "palmscan/dates.hpp"
#include "palmscan/geo.hpp"
#include "palmscan/io.hpp"

namespace palmscan::registry {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kDefaultDedupRadiusM = 3.0;

enum class TreeSource { aerial, street_only };

// Progress of the street-level side of a tree.
enum class StreetStatus {
  pending,      // not linked yet
  linked,       // panorama and heading chosen
  confirmed,    // crown found in the street image
  unconfirmed,  // street image showed no matching crown
  unreachable,  // no panorama within visibility range
};

std::string_view to_string(TreeSource s) noexcept;
std::string_view to_string(StreetStatus s) noexcept;

struct Observation {
  YearMonth capture_date;
  std::optional<std::string> pano_id;
  std::optional<double> heading;
  std::optional<geo::PixelBox> crown_box;
  std::optional<ClassificationResult> classification;
};

struct TreeRecord {
  std::string id;
  geo::GeoPoint location;
  std::vector<Observation> observations;  // capture_date ascending
  TreeSource source = TreeSource::aerial;
  StreetStatus street = StreetStatus::pending;
  double aerial_score = 0.0;
};

// Deterministic id from the location rounded to 1e-6 degrees.
std::string tree_id_for(const geo::GeoPoint& p);

// Sorts by date and collapses entries sharing (date, pano_id, heading);
// later entries fill or override the fields of earlier ones.
std::vector<Observation> normalize_observations(std::vector<Observation> obs);

Json to_json(const TreeRecord& t);
TreeRecord tree_from_json(const Json& j);

// Tree store with a single writer and snapshot readers. Persistence is one
// header line plus one JSON record per tree, sorted by id.
class TreeRegistry {
 public:
  using Snapshot = std::map<std::string, TreeRecord>;

  explicit TreeRegistry(double dedup_radius_m = kDefaultDedupRadiusM);

  // Loads `path` when it exists; otherwise starts empty.
  static TreeRegistry open(const std::filesystem::path& path, double dedup_radius_m = kDefaultDedupRadiusM);
  static TreeRegistry parse(std::string_view text, const std::string& source_name,
                            double dedup_radius_m = kDefaultDedupRadiusM);

  TreeRegistry(TreeRegistry&& other) noexcept;
  TreeRegistry& operator=(TreeRegistry&&) = delete;

  // Merges into the nearest stored tree within the dedup radius, or inserts.
  TreeRecord upsert(const TreeRecord& candidate);
  // Replaces the record with the same id; false when the id is unknown.
  bool replace(TreeRecord updated);

  std::vector<TreeRecord> query_by_box(const geo::GeoBox& box) const;
  std::optional<TreeRecord> find(const std::string& id) const;
  std::vector<TreeRecord> all() const;
  std::size_t size() const;
  double dedup_radius_m() const noexcept { return radius_m_; }

  std::shared_ptr<const Snapshot> snapshot() const;

  std::string serialize() const;
  // Atomic rewrite; false when the file already held identical bytes.
  bool save(const std::filesystem::path& path) const;

 private:
  std::optional<std::string> nearest_within_radius(const geo::GeoPoint& p) const;
  void insert_locked(TreeRecord rec);

  double radius_m_;
  mutable std::shared_mutex mu_;
  std::map<std::string, TreeRecord> trees_;
  std::vector<std::string> slot_ids_;
  geo::GridIndex index_;
  mutable std::shared_ptr<const Snapshot> snapshot_cache_;
};

}  // namespace palmscan::registry
