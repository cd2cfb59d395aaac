#include "palmscan/imagery.hpp"

#include <cmath>
#include <set>

#include "palmscan/errors.hpp"

namespace palmscan {

Json to_json(const PanoramaRecord& p) {
  Json j;
  j["pano_id"] = p.pano_id;
  j["lat"] = p.location.lat;
  j["lon"] = p.location.lon;
  j["date"] = p.capture_date.str();
  return j;
}

PanoramaRecord panorama_from_json(const Json& j) {
  try {
    PanoramaRecord p;
    p.pano_id = j.at("pano_id").get<std::string>();
    p.location = {j.at("lat").get<double>(), j.at("lon").get<double>()};
    p.capture_date = YearMonth::parse(j.at("date").get<std::string>());
    if (p.pano_id.empty()) throw DomainError("empty pano_id");
    if (std::abs(p.location.lat) > 90.0 || std::abs(p.location.lon) > 180.0) {
      throw DomainError("panorama " + p.pano_id + " has invalid location");
    }
    return p;
  } catch (const Json::exception& e) {
    throw DomainError(std::string("bad panorama record: ") + e.what());
  }
}

std::vector<PanoramaRecord> parse_panorama_catalog(const std::vector<Json>& lines) {
  std::vector<PanoramaRecord> out;
  std::set<std::string> seen;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    auto p = panorama_from_json(line);
    if (!seen.insert(p.pano_id).second) throw DomainError("duplicate pano_id " + p.pano_id);
    out.push_back(std::move(p));
  }
  return out;
}

std::string write_panorama_catalog(const std::vector<PanoramaRecord>& panos) {
  std::vector<Json> lines;
  lines.reserve(panos.size());
  for (const auto& p : panos) lines.push_back(to_json(p));
  return io::to_jsonl(lines);
}

std::string heading_token(double heading) { return io::fixed(geo::normalize_heading(heading), 6); }

}  // namespace palmscan

namespace palmscan {

std::string aerial_tile_ref(const geo::TileId& t) {
  return "tiles/" + std::to_string(t.zoom) + "/" + std::to_string(t.x) + "/" + std::to_string(t.y) + ".png";
}

std::string street_image_ref(const std::string& pano_id, double heading) {
  return "street/" + pano_id + "/" + heading_token(heading) + ".jpg";
}

std::string crown_crop_ref(const std::string& street_ref, const geo::PixelBox& crop) {
  return street_ref + "#crop=" + io::fixed(crop.x_min, 3) + "," + io::fixed(crop.y_min, 3) + "," +
         io::fixed(crop.x_max, 3) + "," + io::fixed(crop.y_max, 3);
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::optional<double> to_double(std::string_view s) {
  try {
    std::size_t used = 0;
    const std::string str(s);
    const double v = std::stod(str, &used);
    if (used != str.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<std::int64_t> to_int(std::string_view s) {
  auto d = to_double(s);
  if (!d || *d != std::floor(*d)) return std::nullopt;
  return static_cast<std::int64_t>(*d);
}

bool strip_suffix(std::string_view& s, std::string_view suffix) {
  if (s.size() < suffix.size() || s.substr(s.size() - suffix.size()) != suffix) return false;
  s.remove_suffix(suffix.size());
  return true;
}

}  // namespace

std::optional<ParsedImageRef> parse_image_ref(std::string_view ref) {
  ParsedImageRef out;
  if (auto hash = ref.find("#crop="); hash != std::string_view::npos) {
    auto parts = split(ref.substr(hash + 6), ',');
    if (parts.size() != 4) return std::nullopt;
    double v[4];
    for (int i = 0; i < 4; ++i) {
      auto d = to_double(parts[i]);
      if (!d) return std::nullopt;
      v[i] = *d;
    }
    out.crop = geo::PixelBox{v[0], v[1], v[2], v[3]};
    ref = ref.substr(0, hash);
  }
  const auto tiles_at = ref.rfind("tiles/");
  const auto street_at = ref.rfind("street/");
  const bool is_tiles = tiles_at != std::string_view::npos && (street_at == std::string_view::npos || tiles_at > street_at);
  if (is_tiles) {
    auto rest = ref.substr(tiles_at + 6);
    if (!strip_suffix(rest, ".png")) return std::nullopt;
    auto parts = split(rest, '/');
    if (parts.size() != 3) return std::nullopt;
    auto z = to_int(parts[0]), x = to_int(parts[1]), y = to_int(parts[2]);
    if (!z || !x || !y) return std::nullopt;
    out.kind = ParsedImageRef::Kind::aerial;
    out.tile = {static_cast<int>(*z), *x, *y};
    if (!out.tile.valid()) return std::nullopt;
    return out;
  }
  if (street_at != std::string_view::npos) {
    auto rest = ref.substr(street_at + 7);
    if (!strip_suffix(rest, ".jpg")) return std::nullopt;
    const auto slash = rest.rfind('/');
    if (slash == std::string_view::npos || slash == 0) return std::nullopt;
    auto heading = to_double(rest.substr(slash + 1));
    if (!heading) return std::nullopt;
    out.kind = ParsedImageRef::Kind::street;
    out.pano_id = std::string(rest.substr(0, slash));
    out.heading = *heading;
    return out;
  }
  return std::nullopt;
}

}  // namespace palmscan
