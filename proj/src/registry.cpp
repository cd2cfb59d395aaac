#include "palmscan/registry.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "palmscan/errors.hpp"

namespace palmscan::registry {

namespace {

constexpr double kIndexLatBound = 85.0;

std::optional<TreeSource> source_from(std::string_view s) {
  if (s == "aerial") return TreeSource::aerial;
  if (s == "street-only") return TreeSource::street_only;
  return std::nullopt;
}

std::optional<StreetStatus> street_from(std::string_view s) {
  for (auto v : {StreetStatus::pending, StreetStatus::linked, StreetStatus::confirmed, StreetStatus::unconfirmed,
                 StreetStatus::unreachable}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

// Headings compare at micro-degree resolution.
long long heading_key(const std::optional<double>& h) {
  return h ? std::llround(*h * 1e6) : -1;
}

auto obs_key(const Observation& o) {
  return std::make_tuple(o.capture_date, o.pano_id.value_or(std::string()), heading_key(o.heading));
}

Json box_json(const geo::PixelBox& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

geo::PixelBox box_from(const Json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

Json header_json(double radius) {
  Json h;
  h["schema"] = "palmscan.tree_registry";
  h["schema_version"] = kSchemaVersion;
  h["dedup_radius_m"] = radius;
  return h;
}

}  // namespace

std::string_view to_string(TreeSource s) noexcept { return s == TreeSource::aerial ? "aerial" : "street-only"; }

std::string_view to_string(StreetStatus s) noexcept {
  switch (s) {
    case StreetStatus::pending:
      return "pending";
    case StreetStatus::linked:
      return "linked";
    case StreetStatus::confirmed:
      return "confirmed";
    case StreetStatus::unconfirmed:
      return "unconfirmed";
    case StreetStatus::unreachable:
      return "unreachable";
  }
  return "pending";
}

std::string tree_id_for(const geo::GeoPoint& p) {
  // Snap -0.000000 to 0.000000 so both signs hash alike.
  const auto snapped = [](double v) { return std::round(v * 1e6) / 1e6 + 0.0; };
  const std::string key = io::fixed(snapped(p.lat), 6) + "," + io::fixed(snapped(p.lon), 6);
  return io::hex64(io::fnv1a64(key));
}

std::vector<Observation> normalize_observations(std::vector<Observation> obs) {
  std::stable_sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) { return obs_key(a) < obs_key(b); });
  std::vector<Observation> out;
  for (auto& o : obs) {
    if (!out.empty() && obs_key(out.back()) == obs_key(o)) {
      auto& dst = out.back();
      if (o.crown_box) dst.crown_box = o.crown_box;
      if (o.classification) dst.classification = o.classification;
      continue;
    }
    out.push_back(std::move(o));
  }
  return out;
}

Json to_json(const TreeRecord& t) {
  Json obs = Json::array();
  for (const auto& o : t.observations) {
    Json j;
    j["date"] = o.capture_date.str();
    j["pano_id"] = o.pano_id ? Json(*o.pano_id) : Json(nullptr);
    j["heading"] = o.heading ? Json(*o.heading) : Json(nullptr);
    j["crown_box"] = o.crown_box ? box_json(*o.crown_box) : Json(nullptr);
    j["probs"] = o.classification ? to_json(*o.classification) : Json(nullptr);
    obs.push_back(j);
  }
  Json j;
  j["id"] = t.id;
  j["lat"] = t.location.lat;
  j["lon"] = t.location.lon;
  j["source"] = to_string(t.source);
  j["street"] = to_string(t.street);
  j["aerial_score"] = t.aerial_score;
  j["observations"] = obs;
  return j;
}

TreeRecord tree_from_json(const Json& j) {
  TreeRecord t;
  t.id = j.at("id").get<std::string>();
  t.location = {j.at("lat").get<double>(), j.at("lon").get<double>()};
  auto source = source_from(j.at("source").get<std::string>());
  auto street = street_from(j.at("street").get<std::string>());
  if (!source || !street) throw PersistenceError("tree " + t.id + " has an unknown source or street status");
  t.source = *source;
  t.street = *street;
  t.aerial_score = j.at("aerial_score").get<double>();
  for (const auto& o : j.at("observations")) {
    Observation ob;
    ob.capture_date = YearMonth::parse(o.at("date").get<std::string>());
    if (!o.at("pano_id").is_null()) ob.pano_id = o.at("pano_id").get<std::string>();
    if (!o.at("heading").is_null()) ob.heading = o.at("heading").get<double>();
    if (!o.at("crown_box").is_null()) ob.crown_box = box_from(o.at("crown_box"));
    if (!o.at("probs").is_null()) ob.classification = classification_from_json(o.at("probs"));
    t.observations.push_back(std::move(ob));
  }
  t.observations = normalize_observations(std::move(t.observations));
  return t;
}

TreeRegistry::TreeRegistry(double dedup_radius_m) : radius_m_(dedup_radius_m), index_(dedup_radius_m, kIndexLatBound) {}

TreeRegistry::TreeRegistry(TreeRegistry&& other) noexcept
    : radius_m_(other.radius_m_),
      trees_(std::move(other.trees_)),
      slot_ids_(std::move(other.slot_ids_)),
      index_(std::move(other.index_)),
      snapshot_cache_(std::move(other.snapshot_cache_)) {}

TreeRegistry TreeRegistry::open(const std::filesystem::path& path, double dedup_radius_m) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return TreeRegistry(dedup_radius_m);
  return parse(io::read_file(path), path.string(), dedup_radius_m);
}

TreeRegistry TreeRegistry::parse(std::string_view text, const std::string& source_name, double dedup_radius_m) {
  TreeRegistry reg(dedup_radius_m);
  const std::vector<Json> lines = io::parse_jsonl(text, source_name);
  if (lines.empty()) return reg;
  const auto& header = lines.front();
  if (header.value("schema", std::string()) != "palmscan.tree_registry") {
    throw PersistenceError(source_name + ": missing registry header");
  }
  if (header.value("schema_version", 0) != kSchemaVersion) {
    throw PersistenceError(source_name + ": unsupported registry schema_version");
  }
  std::map<std::string, TreeRecord> latest;
  try {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto t = tree_from_json(lines[i]);
      latest[t.id] = std::move(t);  // later lines win
    }
  } catch (const Json::exception& e) {
    throw PersistenceError(source_name + ": bad tree record: " + e.what());
  } catch (const DomainError& e) {
    throw PersistenceError(source_name + ": bad tree record: " + e.what());
  }
  for (auto& [id, t] : latest) reg.insert_locked(std::move(t));
  return reg;
}

std::optional<std::string> TreeRegistry::nearest_within_radius(const geo::GeoPoint& p) const {
  std::optional<std::string> best;
  double best_d = 0.0;
  for (std::size_t slot : index_.candidates(p)) {
    const auto& id = slot_ids_[slot];
    const double d = geo::haversine_m(p, trees_.at(id).location);
    if (d > radius_m_) continue;
    if (!best || d < best_d || (d == best_d && id < *best)) {
      best = id;
      best_d = d;
    }
  }
  return best;
}

void TreeRegistry::insert_locked(TreeRecord rec) {
  index_.insert(slot_ids_.size(), rec.location);
  slot_ids_.push_back(rec.id);
  trees_.emplace(rec.id, std::move(rec));
  snapshot_cache_.reset();
}

TreeRecord TreeRegistry::upsert(const TreeRecord& candidate) {
  std::unique_lock lock(mu_);
  if (auto hit = nearest_within_radius(candidate.location)) {
    auto& stored = trees_.at(*hit);
    auto merged = stored.observations;
    merged.insert(merged.end(), candidate.observations.begin(), candidate.observations.end());
    stored.observations = normalize_observations(std::move(merged));
    if (candidate.source == TreeSource::aerial) stored.source = TreeSource::aerial;
    if (candidate.street != StreetStatus::pending) stored.street = candidate.street;
    stored.aerial_score = std::max(stored.aerial_score, candidate.aerial_score);
    snapshot_cache_.reset();
    return stored;
  }
  TreeRecord rec = candidate;
  rec.id = tree_id_for(rec.location);
  rec.observations = normalize_observations(std::move(rec.observations));
  insert_locked(rec);
  return rec;
}

bool TreeRegistry::replace(TreeRecord updated) {
  std::unique_lock lock(mu_);
  auto it = trees_.find(updated.id);
  if (it == trees_.end()) return false;
  if (!(it->second.location == updated.location)) {
    throw DomainError("replace must not move tree " + updated.id);
  }
  updated.observations = normalize_observations(std::move(updated.observations));
  it->second = std::move(updated);
  snapshot_cache_.reset();
  return true;
}

std::vector<TreeRecord> TreeRegistry::query_by_box(const geo::GeoBox& box) const {
  if (!box.valid()) throw DomainError("query box must satisfy south < north and west < east");
  std::shared_lock lock(mu_);
  std::vector<TreeRecord> out;
  for (const auto& [id, t] : trees_) {
    if (box.contains_closed(t.location)) out.push_back(t);
  }
  return out;
}

std::optional<TreeRecord> TreeRegistry::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = trees_.find(id);
  if (it == trees_.end()) return std::nullopt;
  return it->second;
}

std::vector<TreeRecord> TreeRegistry::all() const {
  std::shared_lock lock(mu_);
  std::vector<TreeRecord> out;
  out.reserve(trees_.size());
  for (const auto& [id, t] : trees_) out.push_back(t);
  return out;
}

std::size_t TreeRegistry::size() const {
  std::shared_lock lock(mu_);
  return trees_.size();
}

std::shared_ptr<const TreeRegistry::Snapshot> TreeRegistry::snapshot() const {
  std::unique_lock lock(mu_);
  if (!snapshot_cache_) snapshot_cache_ = std::make_shared<const Snapshot>(trees_);
  return snapshot_cache_;
}

std::string TreeRegistry::serialize() const {
  std::shared_lock lock(mu_);
  std::vector<Json> lines;
  lines.reserve(trees_.size() + 1);
  lines.push_back(header_json(radius_m_));
  for (const auto& [id, t] : trees_) lines.push_back(to_json(t));
  return io::to_jsonl(lines);
}

bool TreeRegistry::save(const std::filesystem::path& path) const { return io::write_file_atomic(path, serialize()); }

}  // namespace palmscan::registry
