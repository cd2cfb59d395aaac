#include "palmscan/config.hpp"

#include <cmath>
#include <set>

#include "palmscan/errors.hpp"

namespace palmscan::config {

namespace {

const std::set<std::string> kKnownKeys{
    "aoi",          "workspace",         "streets",        "panoramas",        "zoom",     "tile_size",
    "street_image_size", "fov",          "sample_spacing_m", "headings",       "score_threshold",
    "dedup_radius_m", "visibility_radius_m", "workers",     "backends",        "provider", "costs",
    "heatmap_cell_m", "hotspot_min_count"};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

template <typename T>
T get(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config field \"") + key + "\" has the wrong type");
  }
}

void require_positive(double v, const char* key) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("config field \"") + key + "\" must be positive");
}

BackendSpec parse_backend(const Json& j, const std::string& role, const std::filesystem::path& base) {
  BackendSpec b;
  if (!j.is_object()) throw ConfigError("backend \"" + role + "\" must be an object");
  if (j.contains("command")) {
    b.kind = BackendSpec::Kind::command;
    try {
      b.argv = j.at("command").get<std::vector<std::string>>();
    } catch (const Json::exception&) {
      throw ConfigError("backend \"" + role + "\" command must be a list of strings");
    }
    if (b.argv.empty()) throw ConfigError("backend \"" + role + "\" command is empty");
  } else if (j.contains("mock")) {
    b.kind = BackendSpec::Kind::mock;
    const auto& m = j.at("mock");
    if (!m.contains("world")) throw ConfigError("mock backend \"" + role + "\" needs a world file");
    b.world = resolve(base, m.at("world").get<std::string>());
    try {
      b.noise = sim::noise_from_json(m.value("noise", Json::object()));
    } catch (const DomainError& e) {
      throw ConfigError("mock backend \"" + role + "\": " + e.what());
    }
  } else if (j.contains("replay")) {
    b.kind = BackendSpec::Kind::replay;
    b.manifest = resolve(base, j.at("replay").get<std::string>());
  } else {
    throw ConfigError("backend \"" + role + "\" needs one of command, mock, replay");
  }
  return b;
}

}  // namespace

std::int64_t usd_to_micro(double usd) {
  if (!(usd >= 0.0) || !std::isfinite(usd)) throw ConfigError("unit costs must be non-negative");
  const double micro = usd * 1e6;
  const auto rounded = std::llround(micro);
  if (std::abs(micro - static_cast<double>(rounded)) > 1e-6 * std::max(1.0, std::abs(micro))) {
    throw ConfigError("unit costs are limited to micro-dollar precision");
  }
  return rounded;
}

SurveyConfig parse_config(const Json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : doc.items()) {
    if (!kKnownKeys.count(k)) throw ConfigError("unknown config field \"" + k + "\"");
  }
  SurveyConfig c;
  c.source = doc;
  if (!doc.contains("aoi")) throw ConfigError("config needs an \"aoi\"");
  try {
    c.aoi = planner::AreaOfInterest::from_json(doc.at("aoi"));
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid AOI: ") + e.what());
  }
  c.workspace = resolve(base_dir, get<std::string>(doc, "workspace", "workspace"));
  if (doc.contains("streets")) c.streets = resolve(base_dir, get<std::string>(doc, "streets", ""));
  if (doc.contains("panoramas")) c.panoramas = resolve(base_dir, get<std::string>(doc, "panoramas", ""));

  c.zoom = get<int>(doc, "zoom", c.zoom);
  if (c.zoom < 1 || c.zoom > 22) throw ConfigError("zoom must be in [1, 22]");
  c.tile_size = get<int>(doc, "tile_size", c.tile_size);
  if (c.tile_size <= 0) throw ConfigError("tile_size must be positive");
  c.street_image_size = get<int>(doc, "street_image_size", c.street_image_size);
  if (c.street_image_size <= 0 || c.street_image_size > kStreetImageSize) {
    throw ConfigError("street_image_size must be in [1, 640]");
  }
  c.fov = get<double>(doc, "fov", c.fov);
  if (!(c.fov > 0.0 && c.fov <= 120.0)) throw ConfigError("fov must be in (0, 120]");
  c.sample_spacing_m = get<double>(doc, "sample_spacing_m", c.sample_spacing_m);
  require_positive(c.sample_spacing_m, "sample_spacing_m");
  c.headings = get<std::vector<double>>(doc, "headings", c.headings);
  if (c.headings.empty()) throw ConfigError("headings must not be empty");
  for (double h : c.headings) {
    if (!(h >= 0.0 && h < 360.0)) throw ConfigError("headings must lie in [0, 360)");
  }
  c.score_threshold = get<double>(doc, "score_threshold", c.score_threshold);
  if (!(c.score_threshold > 0.0 && c.score_threshold <= 1.0)) throw ConfigError("score_threshold must be in (0, 1]");
  c.dedup_radius_m = get<double>(doc, "dedup_radius_m", c.dedup_radius_m);
  require_positive(c.dedup_radius_m, "dedup_radius_m");
  c.visibility_radius_m = get<double>(doc, "visibility_radius_m", c.visibility_radius_m);
  require_positive(c.visibility_radius_m, "visibility_radius_m");
  const auto workers = get<long long>(doc, "workers", static_cast<long long>(c.workers));
  if (workers < 1) throw ConfigError("workers must be positive");
  c.workers = static_cast<std::size_t>(workers);
  c.heatmap_cell_m = get<double>(doc, "heatmap_cell_m", c.heatmap_cell_m);
  require_positive(c.heatmap_cell_m, "heatmap_cell_m");
  c.hotspot_min_count = get<std::int64_t>(doc, "hotspot_min_count", c.hotspot_min_count);
  if (c.hotspot_min_count < 1) throw ConfigError("hotspot_min_count must be at least 1");

  if (doc.contains("backends")) {
    const auto& b = doc.at("backends");
    if (!b.is_object()) throw ConfigError("backends must be an object");
    for (const auto& [k, v] : b.items()) {
      if (k == "aerial") {
        c.aerial_backend = parse_backend(v, k, base_dir);
      } else if (k == "street") {
        c.street_backend = parse_backend(v, k, base_dir);
      } else if (k == "classify") {
        c.classify_backend = parse_backend(v, k, base_dir);
      } else if (k == "timeout_s") {
        const double t = get<double>(b, "timeout_s", 30.0);
        require_positive(t, "backends.timeout_s");
        c.backend_timeout = std::chrono::milliseconds(std::llround(t * 1000.0));
      } else {
        throw ConfigError("unknown backend role \"" + k + "\"");
      }
    }
  }

  c.cache_dir = c.workspace / "cache";
  if (doc.contains("provider")) {
    const auto& p = doc.at("provider");
    if (!p.is_object()) throw ConfigError("provider must be an object");
    for (const auto& [k, v] : p.items()) {
      if (k != "aerial_template" && k != "street_template" && k != "key_env" && k != "rate_limit_per_s" &&
          k != "cache_dir" && k != "api_key") {
        throw ConfigError("unknown provider field \"" + k + "\"");
      }
    }
    if (p.contains("api_key")) {
      throw ConfigError("API keys must not be stored in the config; set provider.key_env to an environment variable");
    }
    c.provider.aerial_template = get<std::string>(p, "aerial_template", c.provider.aerial_template);
    c.provider.street_template = get<std::string>(p, "street_template", c.provider.street_template);
    c.provider.key_env = get<std::string>(p, "key_env", c.provider.key_env);
    c.provider.rate_limit_per_s = get<double>(p, "rate_limit_per_s", c.provider.rate_limit_per_s);
    require_positive(c.provider.rate_limit_per_s, "provider.rate_limit_per_s");
    if (p.contains("cache_dir")) c.cache_dir = resolve(base_dir, get<std::string>(p, "cache_dir", ""));
  }
  if (doc.contains("costs")) {
    const auto& k = doc.at("costs");
    if (!k.is_object()) throw ConfigError("costs must be an object");
    for (const auto& [name, v] : k.items()) {
      if (name != "street_image_usd" && name != "aerial_tile_usd") throw ConfigError("unknown costs field \"" + name + "\"");
    }
    c.provider.street_unit_cost_micro = usd_to_micro(get<double>(k, "street_image_usd", 0.007));
    c.provider.aerial_unit_cost_micro = usd_to_micro(get<double>(k, "aerial_tile_usd", 0.0));
  }
  return c;
}

SurveyConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const PersistenceError& e) {
    throw ConfigError(e.what());
  }
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, std::filesystem::absolute(path).parent_path());
}

Json to_json(const BackendSpec& b, const std::filesystem::path& base_dir) {
  auto rel = [&](const std::filesystem::path& p) { return p.lexically_relative(base_dir).generic_string(); };
  switch (b.kind) {
    case BackendSpec::Kind::command:
      return {{"command", b.argv}};
    case BackendSpec::Kind::mock:
      return {{"mock", {{"world", rel(b.world)}, {"noise", sim::to_json(b.noise)}}}};
    case BackendSpec::Kind::replay:
      return {{"replay", rel(b.manifest)}};
  }
  return Json::object();
}

}  // namespace palmscan::config
