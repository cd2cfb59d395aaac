#include "palmscan/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <tuple>

#include "palmscan/errors.hpp"
#include "palmscan/timeline.hpp"

namespace palmscan::sim {

namespace {

constexpr int kLabelCount = 3;
const std::vector<std::string> kDetectLabels{"palm"};
const std::vector<std::string> kClassifyLabels{"healthy", "infested", "unknown"};

// Equirectangular frame anchored at the world origin; fine at city scale.
struct LocalFrame {
  geo::GeoPoint origin;
  double cos_lat;

  explicit LocalFrame(const geo::GeoPoint& o) : origin(o), cos_lat(std::cos(geo::deg2rad(o.lat))) {}

  geo::GeoPoint to_geo(double east, double north) const {
    return {origin.lat + geo::rad2deg(north / geo::kHaversineRadius),
            origin.lon + geo::rad2deg(east / (geo::kHaversineRadius * cos_lat))};
  }
  std::pair<double, double> to_local(const geo::GeoPoint& p) const {
    return {geo::deg2rad(p.lon - origin.lon) * geo::kHaversineRadius * cos_lat,
            geo::deg2rad(p.lat - origin.lat) * geo::kHaversineRadius};
  }
};

struct Vec {
  double e = 0.0;
  double n = 0.0;
};

std::mt19937_64 keyed_rng(std::uint64_t seed, std::string_view key) {
  const std::uint64_t h = io::fnv1a64(key, io::fnv1a64(io::hex64(seed)));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

geo::PixelBox jittered(geo::PixelBox b, double sigma, double size, std::mt19937_64& rng) {
  if (sigma <= 0.0) return b;
  std::normal_distribution<double> n(0.0, sigma);
  double v[4] = {b.x_min + n(rng), b.y_min + n(rng), b.x_max + n(rng), b.y_max + n(rng)};
  for (double& x : v) x = std::clamp(x, 0.0, size);
  return {std::min(v[0], v[2]), std::min(v[1], v[3]), std::max(v[0], v[2]), std::max(v[1], v[3])};
}

// Box of half-size `half` around c, shrunk evenly so it stays inside the
// image while keeping its center at c.
geo::PixelBox centered_box(geo::PixelPoint c, double half_w, double half_h, double size) {
  const double hx = std::min({half_w, c.x, size - c.x});
  const double hy = std::min({half_h, c.y, size - c.y});
  return {c.x - hx, c.y - hy, c.x + hx, c.y + hy};
}

double signed_offset(double bearing, double heading) {
  double d = std::fmod(bearing - heading, 360.0);
  if (d < -180.0) d += 360.0;
  if (d >= 180.0) d -= 360.0;
  return d;
}

// Where a palm appears in a street view, if it does.
struct Projection {
  double center_x;
  double half_px;
  double distance_m;
};

std::optional<Projection> project(const Palm& palm, const PanoramaRecord& pano, double heading, double crown_m,
                                  double radius_m) {
  const double dist = geo::haversine_m(pano.location, palm.location);
  if (dist > radius_m || dist < 0.5) return std::nullopt;
  const double off = signed_offset(geo::bearing_deg(pano.location, palm.location), heading);
  const double half_fov = kDefaultFov / 2.0;
  if (off < -half_fov || off > half_fov) return std::nullopt;
  const double px_per_deg = kStreetImageSize / kDefaultFov;
  const double half_deg = geo::rad2deg(std::atan((crown_m / 2.0) / dist));
  return Projection{(off + half_fov) * px_per_deg, half_deg * px_per_deg, dist};
}

ClassificationResult sample_probs(std::size_t reported, std::mt19937_64& rng) {
  ClassificationResult c;
  const double main = 0.6 + 0.4 * uniform01(rng);
  const double split = uniform01(rng);
  const double rest = 1.0 - main;
  int k = 0;
  for (std::size_t i = 0; i < kLabelCount; ++i) {
    if (i == reported) {
      c.probs[i] = main;
    } else {
      c.probs[i] = (k++ == 0) ? rest * split : rest * (1.0 - split);
    }
  }
  return c;
}

// Cache-relative form of a parsed reference, so noise does not depend on
// where the cache lives.
std::string canonical_ref(const ParsedImageRef& r) {
  if (r.kind == ParsedImageRef::Kind::aerial) return aerial_tile_ref(r.tile);
  const auto view = street_image_ref(r.pano_id, r.heading);
  return r.crop ? crown_crop_ref(view, *r.crop) : view;
}

Json point_json(const geo::GeoPoint& p) { return {{"lat", p.lat}, {"lon", p.lon}}; }
geo::GeoPoint point_from(const Json& j) { return {j.at("lat").get<double>(), j.at("lon").get<double>()}; }

}  // namespace

void WorldParams::validate() const {
  auto bad = [](const std::string& what) { throw DomainError("world parameters: " + what); };
  if (!(std::abs(origin.lat) < 80.0) || !(origin.lon >= -180.0 && origin.lon < 180.0)) bad("origin out of range");
  if (blocks_east < 1 || blocks_north < 1) bad("need at least one block each way");
  if (!(block_m > 0.0)) bad("block_m must be positive");
  if (!(street_jitter_m >= 0.0) || street_jitter_m * 4.0 >= block_m) bad("street_jitter_m must be in [0, block_m/4)");
  if (!(palm_spacing_m > 0.0) || !(palm_offset_m > 0.0) || !(intersection_clearance_m >= 0.0)) {
    bad("palm spacing, offset and clearance must be positive");
  }
  if (!(palm_density_per_km2 >= 0.0)) bad("palm density must be non-negative");
  if (palm_count && *palm_count < 0) bad("palm_count must be non-negative");
  if (!(crown_diameter_m > 0.0)) bad("crown_diameter_m must be positive");
  if (!(infested_fraction >= 0.0 && infested_fraction <= 1.0)) bad("infested_fraction must be in [0,1]");
  if (!(pano_spacing_m > 0.0) || !(pano_jitter_m >= 0.0)) bad("panorama spacing must be positive");
  if (capture_dates.empty()) bad("need at least one capture date");
  for (std::size_t i = 1; i < capture_dates.size(); ++i) {
    if (!(capture_dates[i - 1] < capture_dates[i])) bad("capture dates must be strictly increasing");
  }
  if (infested_fraction > 0.0 && capture_dates.size() < 2) bad("infestation onsets need two capture dates");
  if (!(visibility_radius_m > 0.0)) bad("visibility radius must be positive");
  if (!(aoi_margin_m > palm_offset_m + street_jitter_m)) bad("aoi_margin_m must exceed palm offset plus jitter");
}

SyntheticWorld generate_world(std::uint64_t seed, const WorldParams& params) {
  params.validate();
  SyntheticWorld w;
  w.seed = seed;
  w.params = params;
  w.visibility_radius_m = params.visibility_radius_m;
  w.crown_diameter_m = params.crown_diameter_m;
  std::mt19937_64 rng(seed);
  const LocalFrame frame(params.origin);

  const int nx = params.blocks_east + 1, ny = params.blocks_north + 1;
  std::vector<Vec> nodes(static_cast<std::size_t>(nx * ny));
  std::uniform_real_distribution<double> jit(-params.street_jitter_m, params.street_jitter_m);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double je = jit(rng), jn = jit(rng);
      nodes[j * nx + i] = {i * params.block_m + je, j * params.block_m + jn};
    }
  }
  auto node = [&](int i, int j) { return nodes[j * nx + i]; };

  const double m = params.aoi_margin_m;
  const auto sw = frame.to_geo(-m, -m);
  const auto ne = frame.to_geo(params.blocks_east * params.block_m + m, params.blocks_north * params.block_m + m);
  w.aoi = {sw.lat, sw.lon, ne.lat, ne.lon};

  std::vector<std::vector<Vec>> local_streets;
  for (int i = 0; i < nx; ++i) {
    std::vector<Vec> s;
    for (int j = 0; j < ny; ++j) s.push_back(node(i, j));
    local_streets.push_back(std::move(s));
  }
  for (int j = 0; j < ny; ++j) {
    std::vector<Vec> s;
    for (int i = 0; i < nx; ++i) s.push_back(node(i, j));
    local_streets.push_back(std::move(s));
  }
  for (const auto& s : local_streets) {
    planner::Polyline line;
    for (const auto& v : s) line.vertices.push_back(frame.to_geo(v.e, v.n));
    w.streets.push_back(std::move(line));
  }

  // Palm slots along both sides of every block-long segment.
  std::vector<Vec> slots;
  for (const auto& s : local_streets) {
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      const Vec a = s[k], b = s[k + 1];
      const double len = std::hypot(b.e - a.e, b.n - a.n);
      const Vec u{(b.e - a.e) / len, (b.n - a.n) / len};
      const Vec nrm{-u.n, u.e};
      for (double d = params.intersection_clearance_m; d <= len - params.intersection_clearance_m + 1e-9;
           d += params.palm_spacing_m) {
        for (double side : {-1.0, 1.0}) {
          slots.push_back({a.e + u.e * d + side * nrm.e * params.palm_offset_m,
                           a.n + u.n * d + side * nrm.n * params.palm_offset_m});
        }
      }
    }
  }
  w.slot_count = slots.size();

  std::vector<std::size_t> chosen;
  if (params.palm_count) {
    if (static_cast<std::size_t>(*params.palm_count) > slots.size()) {
      throw DomainError("palm_count " + std::to_string(*params.palm_count) + " exceeds the " +
                        std::to_string(slots.size()) + " available slots");
    }
    std::vector<std::size_t> idx(slots.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(*params.palm_count));
    std::sort(idx.begin(), idx.end());
    chosen = std::move(idx);
  } else {
    const double area_km2 = (params.blocks_east * params.block_m + 2 * m) * (params.blocks_north * params.block_m + 2 * m) / 1e6;
    const double p = slots.empty() ? 0.0 : params.palm_density_per_km2 * area_km2 / static_cast<double>(slots.size());
    if (p > 1.0) throw DomainError("palm density exceeds the street slot capacity");
    std::bernoulli_distribution take(p);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (take(rng)) chosen.push_back(i);
    }
  }

  const int first = params.capture_dates.front().index();
  const int last = params.capture_dates.back().index();
  std::bernoulli_distribution infested(params.infested_fraction);
  for (std::size_t i : chosen) {
    Palm p;
    p.location = frame.to_geo(slots[i].e, slots[i].n);
    if (infested(rng)) {
      // Onset strictly after the first capture and no later than the last.
      std::uniform_int_distribution<int> month(first + 1, last);
      p.onset = YearMonth::from_index(month(rng));
    }
    w.palms.push_back(p);
  }

  // Panorama sites every pano_spacing_m along each street, one capture per
  // date, each displaced by a little GPS jitter.
  std::vector<geo::GeoPoint> sites;
  std::set<std::pair<long long, long long>> seen;
  for (const auto& line : w.streets) {
    for (const auto& p : planner::sample_street_points(line, params.pano_spacing_m)) {
      if (seen.emplace(std::llround(p.lat * 1e7), std::llround(p.lon * 1e7)).second) sites.push_back(p);
    }
  }
  std::uniform_real_distribution<double> pj(-params.pano_jitter_m, params.pano_jitter_m);
  for (std::size_t k = 0; k < sites.size(); ++k) {
    const auto [e, n] = frame.to_local(sites[k]);
    for (const auto& date : params.capture_dates) {
      char id[48];
      std::snprintf(id, sizeof(id), "pano-%05zu-%04d%02d", k, date.year, date.month);
      const double de = pj(rng), dn = pj(rng);
      w.panoramas.push_back({id, frame.to_geo(e + de, n + dn), date});
    }
  }
  return w;
}

std::size_t street_visible_count(const SyntheticWorld& w) {
  geo::GridIndex index(w.visibility_radius_m, 85.0);
  for (std::size_t i = 0; i < w.panoramas.size(); ++i) index.insert(i, w.panoramas[i].location);
  std::size_t n = 0;
  for (const auto& p : w.palms) {
    for (std::size_t i : index.candidates(p.location)) {
      if (geo::haversine_m(p.location, w.panoramas[i].location) <= w.visibility_radius_m) {
        ++n;
        break;
      }
    }
  }
  return n;
}

Json to_json(const SyntheticWorld& w) {
  const auto& p = w.params;
  Json params;
  params["origin"] = point_json(p.origin);
  params["blocks_east"] = p.blocks_east;
  params["blocks_north"] = p.blocks_north;
  params["block_m"] = p.block_m;
  params["street_jitter_m"] = p.street_jitter_m;
  params["palm_spacing_m"] = p.palm_spacing_m;
  params["palm_offset_m"] = p.palm_offset_m;
  params["intersection_clearance_m"] = p.intersection_clearance_m;
  params["palm_density_per_km2"] = p.palm_density_per_km2;
  params["palm_count"] = p.palm_count ? Json(*p.palm_count) : Json(nullptr);
  params["crown_diameter_m"] = p.crown_diameter_m;
  params["infested_fraction"] = p.infested_fraction;
  params["pano_spacing_m"] = p.pano_spacing_m;
  params["pano_jitter_m"] = p.pano_jitter_m;
  Json dates = Json::array();
  for (const auto& d : p.capture_dates) dates.push_back(d.str());
  params["capture_dates"] = dates;
  params["visibility_radius_m"] = p.visibility_radius_m;
  params["aoi_margin_m"] = p.aoi_margin_m;

  Json palms = Json::array();
  for (std::size_t i = 0; i < w.palms.size(); ++i) {
    Json j;
    j["index"] = i;
    j["lat"] = w.palms[i].location.lat;
    j["lon"] = w.palms[i].location.lon;
    j["onset"] = w.palms[i].onset ? Json(w.palms[i].onset->str()) : Json(nullptr);
    palms.push_back(j);
  }
  Json panos = Json::array();
  for (const auto& pano : w.panoramas) panos.push_back(palmscan::to_json(pano));

  Json j;
  j["schema"] = "palmscan.world";
  j["schema_version"] = 1;
  j["seed"] = w.seed;
  j["params"] = params;
  j["aoi"] = {{"south", w.aoi.south}, {"west", w.aoi.west}, {"north", w.aoi.north}, {"east", w.aoi.east}};
  j["visibility_radius_m"] = w.visibility_radius_m;
  j["crown_diameter_m"] = w.crown_diameter_m;
  j["slot_count"] = w.slot_count;
  j["streets"] = planner::streets_to_geojson(w.streets);
  j["palms"] = palms;
  j["panoramas"] = panos;
  return j;
}

SyntheticWorld world_from_json(const Json& j) {
  try {
    if (j.at("schema").get<std::string>() != "palmscan.world") throw DomainError("not a world document");
    SyntheticWorld w;
    w.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("params");
    auto& wp = w.params;
    wp.origin = point_from(p.at("origin"));
    wp.blocks_east = p.at("blocks_east").get<int>();
    wp.blocks_north = p.at("blocks_north").get<int>();
    wp.block_m = p.at("block_m").get<double>();
    wp.street_jitter_m = p.at("street_jitter_m").get<double>();
    wp.palm_spacing_m = p.at("palm_spacing_m").get<double>();
    wp.palm_offset_m = p.at("palm_offset_m").get<double>();
    wp.intersection_clearance_m = p.at("intersection_clearance_m").get<double>();
    wp.palm_density_per_km2 = p.at("palm_density_per_km2").get<double>();
    if (!p.at("palm_count").is_null()) wp.palm_count = p.at("palm_count").get<int>();
    wp.crown_diameter_m = p.at("crown_diameter_m").get<double>();
    wp.infested_fraction = p.at("infested_fraction").get<double>();
    wp.pano_spacing_m = p.at("pano_spacing_m").get<double>();
    wp.pano_jitter_m = p.at("pano_jitter_m").get<double>();
    wp.capture_dates.clear();
    for (const auto& d : p.at("capture_dates")) wp.capture_dates.push_back(YearMonth::parse(d.get<std::string>()));
    wp.visibility_radius_m = p.at("visibility_radius_m").get<double>();
    wp.aoi_margin_m = p.at("aoi_margin_m").get<double>();

    const auto& a = j.at("aoi");
    w.aoi = {a.at("south").get<double>(), a.at("west").get<double>(), a.at("north").get<double>(),
             a.at("east").get<double>()};
    w.visibility_radius_m = j.at("visibility_radius_m").get<double>();
    w.crown_diameter_m = j.at("crown_diameter_m").get<double>();
    w.slot_count = j.at("slot_count").get<std::size_t>();
    w.streets = planner::parse_streets_geojson(j.at("streets"));
    for (const auto& pj : j.at("palms")) {
      Palm palm;
      palm.location = {pj.at("lat").get<double>(), pj.at("lon").get<double>()};
      if (!pj.at("onset").is_null()) palm.onset = YearMonth::parse(pj.at("onset").get<std::string>());
      w.palms.push_back(palm);
    }
    for (const auto& pj : j.at("panoramas")) w.panoramas.push_back(panorama_from_json(pj));
    return w;
  } catch (const Json::exception& e) {
    throw DomainError(std::string("malformed world document: ") + e.what());
  }
}

void NoiseModel::validate() const {
  if (!(miss_rate >= 0.0 && miss_rate <= 1.0)) throw DomainError("miss_rate must be in [0,1]");
  if (!(false_positive_rate >= 0.0) || !std::isfinite(false_positive_rate)) {
    throw DomainError("false_positive_rate must be non-negative");
  }
  if (!(bbox_jitter_sigma >= 0.0) || !std::isfinite(bbox_jitter_sigma)) {
    throw DomainError("bbox_jitter_sigma must be non-negative");
  }
  for (const auto& row : confusion) {
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("confusion entries must be in [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("confusion rows must sum to 1");
  }
}

Json to_json(const NoiseModel& n) {
  Json rows = Json::array();
  for (const auto& r : n.confusion) rows.push_back(Json::array({r[0], r[1], r[2]}));
  Json j;
  j["miss_rate"] = n.miss_rate;
  j["false_positive_rate"] = n.false_positive_rate;
  j["bbox_jitter_sigma"] = n.bbox_jitter_sigma;
  j["confusion"] = rows;
  return j;
}

NoiseModel noise_from_json(const Json& j) {
  NoiseModel n;
  try {
    n.miss_rate = j.value("miss_rate", 0.0);
    n.false_positive_rate = j.value("false_positive_rate", 0.0);
    n.bbox_jitter_sigma = j.value("bbox_jitter_sigma", 0.0);
    if (j.contains("confusion")) {
      const auto& rows = j.at("confusion");
      if (!rows.is_array() || rows.size() != 3) throw DomainError("confusion must be a 3x3 matrix");
      for (std::size_t r = 0; r < 3; ++r) {
        if (!rows[r].is_array() || rows[r].size() != 3) throw DomainError("confusion must be a 3x3 matrix");
        for (std::size_t c = 0; c < 3; ++c) n.confusion[r][c] = rows[r][c].get<double>();
      }
    }
  } catch (const Json::exception& e) {
    throw DomainError(std::string("malformed noise model: ") + e.what());
  }
  n.validate();
  return n;
}

MockBackend::MockBackend(std::shared_ptr<const SyntheticWorld> world, NoiseModel noise)
    : world_(std::move(world)), noise_(noise) {
  noise_.validate();
  for (std::size_t i = 0; i < world_->panoramas.size(); ++i) pano_by_id_.emplace(world_->panoramas[i].pano_id, i);
}

std::vector<gateway::Detection> MockBackend::detect_aerial(const std::string& ref, const geo::TileId& tile) const {
  auto rng = keyed_rng(world_->seed, ref);
  const double size = kAerialTileSize;
  std::vector<gateway::Detection> out;
  for (const auto& palm : world_->palms) {
    if (geo::tile_for_point(palm.location, tile.zoom) != tile) continue;
    const double miss = uniform01(rng);
    const double score = 0.6 + 0.4 * uniform01(rng);
    if (miss < noise_.miss_rate) continue;
    const auto c = geo::geo_to_pixel(tile, palm.location, kAerialTileSize);
    const double half = world_->crown_diameter_m / 2.0 / geo::ground_resolution_m(palm.location.lat, tile.zoom, kAerialTileSize);
    out.push_back({jittered(centered_box(c, half, half, size), noise_.bbox_jitter_sigma, size, rng), score, "palm", {}});
  }
  const int fps = std::poisson_distribution<int>(noise_.false_positive_rate)(rng);
  for (int k = 0; k < fps; ++k) {
    const double cx = 16.0 + 224.0 * uniform01(rng), cy = 16.0 + 224.0 * uniform01(rng);
    const double half = 8.0 + 12.0 * uniform01(rng);
    out.push_back({centered_box({cx, cy}, half, half, size), 0.5 + 0.5 * uniform01(rng), "palm", {}});
  }
  return out;
}

std::vector<gateway::Detection> MockBackend::detect_street(const std::string& ref, const PanoramaRecord& pano,
                                                           double heading) const {
  auto rng = keyed_rng(world_->seed, ref);
  const double size = kStreetImageSize;
  std::vector<gateway::Detection> out;
  for (const auto& palm : world_->palms) {
    const auto proj = project(palm, pano, heading, world_->crown_diameter_m, world_->visibility_radius_m);
    if (!proj) continue;
    const double score = 0.6 + 0.4 * uniform01(rng);
    const auto box = centered_box({proj->center_x, size / 2.0}, proj->half_px, proj->half_px, size);
    out.push_back({jittered(box, noise_.bbox_jitter_sigma, size, rng), score, "palm", {}});
  }
  return out;
}

std::vector<gateway::Detection> MockBackend::detect(const std::string& image_ref) const {
  const auto parsed = parse_image_ref(image_ref);
  if (!parsed || parsed->crop) throw DomainError("unrecognised image " + image_ref);
  const auto key = canonical_ref(*parsed);
  if (parsed->kind == ParsedImageRef::Kind::aerial) return detect_aerial(key, parsed->tile);
  auto it = pano_by_id_.find(parsed->pano_id);
  if (it == pano_by_id_.end()) throw DomainError("unknown panorama " + parsed->pano_id);
  return detect_street(key, world_->panoramas[it->second], parsed->heading);
}

ClassificationResult MockBackend::classify(const std::string& image_ref) const {
  const auto parsed = parse_image_ref(image_ref);
  if (!parsed || parsed->kind != ParsedImageRef::Kind::street || !parsed->crop) {
    throw DomainError("classification needs a street crop, got " + image_ref);
  }
  auto it = pano_by_id_.find(parsed->pano_id);
  if (it == pano_by_id_.end()) throw DomainError("unknown panorama " + parsed->pano_id);
  const auto& pano = world_->panoramas[it->second];
  const double crop_x = parsed->crop->center().x;

  const Palm* target = nullptr;
  double best_dx = 0.0, best_dist = 0.0;
  for (const auto& palm : world_->palms) {
    const auto proj = project(palm, pano, parsed->heading, world_->crown_diameter_m, world_->visibility_radius_m);
    if (!proj) continue;
    const double dx = std::abs(proj->center_x - crop_x);
    if (!target || dx < best_dx || (dx == best_dx && proj->distance_m < best_dist)) {
      target = &palm;
      best_dx = dx;
      best_dist = proj->distance_m;
    }
  }
  std::size_t state = static_cast<std::size_t>(CrownLabel::unknown);
  if (target) {
    state = static_cast<std::size_t>(target->infested_at(pano.capture_date) ? CrownLabel::infested : CrownLabel::healthy);
  }
  auto rng = keyed_rng(world_->seed, canonical_ref(*parsed));
  const double u = uniform01(rng);
  std::size_t reported = kLabelCount - 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < kLabelCount; ++k) {
    acc += noise_.confusion[state][k];
    if (u < acc) {
      reported = k;
      break;
    }
  }
  // Rounding can leave u above the final cumulative sum; skip empty columns.
  while (noise_.confusion[state][reported] == 0.0 && reported > 0) --reported;
  return sample_probs(reported, rng);
}

std::string MockBackend::handle(const std::string& line) const {
  Json req;
  try {
    req = Json::parse(line);
  } catch (const Json::parse_error&) {
    return gateway::error_reply(0, "malformed request");
  }
  const auto op = req.value("op", std::string());
  if (op == "hello") {
    return gateway::hello_reply(req.value("task", std::string()) == "classify" ? kClassifyLabels : kDetectLabels);
  }
  const auto id = req.value("id", std::size_t{0});
  const auto image = req.value("image", std::string());
  try {
    if (op == "detect") return gateway::detections_reply(id, detect(image));
    if (op == "classify") return gateway::probs_reply(id, classify(image));
  } catch (const DomainError& e) {
    return gateway::error_reply(id, e.what());
  }
  return gateway::error_reply(id, "unknown op " + op);
}

gateway::ChannelFactory mock_factory(std::shared_ptr<const SyntheticWorld> world, const NoiseModel& noise) {
  auto backend = std::make_shared<const MockBackend>(std::move(world), noise);
  return [backend]() -> std::unique_ptr<gateway::BackendChannel> {
    return std::make_unique<gateway::InProcessChannel>([backend](const std::string& line) { return backend->handle(line); });
  };
}

void serve(const MockBackend& backend, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << backend.handle(line) << '\n';
    out.flush();
  }
}

std::filesystem::path write_scenario(const SyntheticWorld& w, const NoiseModel& noise, const std::filesystem::path& out,
                                     std::size_t workers, const std::vector<std::string>& serve_argv) {
  noise.validate();
  const auto dir = std::filesystem::absolute(out);
  io::write_file_atomic(dir / "world.json", io::dump_pretty(to_json(w)));
  io::write_file_atomic(dir / "streets.geojson", io::dump_pretty(planner::streets_to_geojson(w.streets)));
  io::write_file_atomic(dir / "panoramas.jsonl", write_panorama_catalog(w.panoramas));

  Json backend;
  if (serve_argv.empty()) {
    backend = {{"mock", {{"world", "world.json"}, {"noise", to_json(noise)}}}};
  } else {
    auto argv = serve_argv;
    argv.insert(argv.end(), {"--world", (dir / "world.json").string(), "--noise", to_json(noise).dump()});
    backend = {{"command", argv}};
  }
  Json cfg;
  cfg["aoi"] = {{"name", "sim-" + std::to_string(w.seed)},
                {"box", {{"south", w.aoi.south}, {"west", w.aoi.west}, {"north", w.aoi.north}, {"east", w.aoi.east}}}};
  cfg["workspace"] = "workspace";
  cfg["streets"] = "streets.geojson";
  cfg["panoramas"] = "panoramas.jsonl";
  cfg["workers"] = workers;
  cfg["backends"] = {{"aerial", backend}, {"street", backend}, {"classify", backend}};
  cfg["provider"] = {{"aerial_template", "sim"}, {"street_template", "sim"}};
  io::write_file_atomic(dir / "config.json", io::dump_pretty(cfg));
  return dir / "config.json";
}

Json replay_manifest(const MockBackend& backend, const std::vector<std::string>& detect_refs,
                     const std::vector<std::string>& classify_refs) {
  Json images = Json::object();
  for (const auto& ref : detect_refs) {
    Json arr = Json::array();
    try {
      for (const auto& d : backend.detect(ref)) {
        arr.push_back({{"box", Json::array({d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max})},
                       {"score", d.score},
                       {"label", d.label}});
      }
      images[ref]["detections"] = arr;
    } catch (const DomainError& e) {
      images[ref]["error"] = e.what();
    }
  }
  for (const auto& ref : classify_refs) {
    try {
      images[ref]["probs"] = to_json(backend.classify(ref));
    } catch (const DomainError& e) {
      images[ref]["error"] = e.what();
    }
  }
  Json j;
  j["labels"] = kDetectLabels;
  j["images"] = images;
  return j;
}

RunScore score_run(const SyntheticWorld& w, const std::vector<registry::TreeRecord>& trees) {
  RunScore s;
  s.palms = w.palms.size();
  s.trees = trees.size();

  geo::GridIndex index(kMatchRadiusM, 85.0);
  for (std::size_t i = 0; i < w.palms.size(); ++i) index.insert(i, w.palms[i].location);
  std::vector<std::tuple<double, std::string, std::size_t, std::size_t>> pairs;  // dist, tree id, palm, tree
  for (std::size_t t = 0; t < trees.size(); ++t) {
    for (std::size_t p : index.candidates(trees[t].location)) {
      const double d = geo::haversine_m(trees[t].location, w.palms[p].location);
      if (d <= kMatchRadiusM) pairs.emplace_back(d, trees[t].id, p, t);
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a), std::get<2>(a)) < std::tie(std::get<0>(b), std::get<1>(b), std::get<2>(b));
  });
  std::vector<std::optional<std::size_t>> tree_of_palm(w.palms.size());
  std::vector<bool> tree_used(trees.size(), false);
  double err = 0.0;
  for (const auto& [d, id, p, t] : pairs) {
    if (tree_of_palm[p] || tree_used[t]) continue;
    tree_of_palm[p] = t;
    tree_used[t] = true;
    err += d;
    ++s.matched;
  }
  if (s.palms > 0) s.recall = static_cast<double>(s.matched) / static_cast<double>(s.palms);
  if (s.trees > 0) s.precision = static_cast<double>(s.matched) / static_cast<double>(s.trees);
  if (s.matched > 0) s.mean_coord_error_m = err / static_cast<double>(s.matched);

  std::size_t infested = 0, correct = 0;
  for (std::size_t p = 0; p < w.palms.size(); ++p) {
    const auto& onset = w.palms[p].onset;
    if (!onset) continue;
    ++infested;
    if (!tree_of_palm[p]) continue;
    const auto tl = timeline::timeline_for(trees[*tree_of_palm[p]]);
    if (tl.transition && tl.transition->contains(*onset)) ++correct;
  }
  if (infested > 0) s.timeline_accuracy = static_cast<double>(correct) / static_cast<double>(infested);
  return s;
}

}  // namespace palmscan::sim
