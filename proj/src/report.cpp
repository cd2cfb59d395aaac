#include "palmscan/report.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "palmscan/errors.hpp"

namespace palmscan::report {

namespace {

std::vector<registry::TreeRecord> by_id(std::vector<registry::TreeRecord> trees) {
  std::sort(trees.begin(), trees.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return trees;
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::int64_t HeatmapGrid::total() const noexcept {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

geo::GeoBox HeatmapGrid::cell_bounds(std::int64_t row, std::int64_t col) const {
  const auto o = geo::geo_to_mercator(origin);
  const auto nw = geo::mercator_to_geo({o.x + col * cell_mercator_m, o.y - row * cell_mercator_m});
  const auto se = geo::mercator_to_geo({o.x + (col + 1) * cell_mercator_m, o.y - (row + 1) * cell_mercator_m});
  return {se.lat, nw.lon, nw.lat, se.lon};
}

HeatmapGrid build_heatmap(const std::vector<registry::TreeRecord>& trees, const planner::AreaOfInterest& aoi,
                          double cell_size_m) {
  if (!(cell_size_m > 0.0) || !std::isfinite(cell_size_m)) throw DomainError("heatmap cell size must be positive");
  const auto& b = aoi.bounds();
  HeatmapGrid g;
  g.origin = {b.north, b.west};
  g.cell_size_m = cell_size_m;
  g.cell_mercator_m = cell_size_m / std::cos(geo::deg2rad((b.south + b.north) / 2.0));
  const auto nw = geo::geo_to_mercator({b.north, b.west});
  const auto se = geo::geo_to_mercator({b.south, b.east});
  g.cols = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil((se.x - nw.x) / g.cell_mercator_m)));
  g.rows = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil((nw.y - se.y) / g.cell_mercator_m)));
  g.counts.assign(static_cast<std::size_t>(g.rows * g.cols), 0);
  for (const auto& t : trees) {
    if (!aoi.contains(t.location)) {
      ++g.remainder;
      continue;
    }
    const auto m = geo::geo_to_mercator(t.location);
    // A point on the AOI's south or east edge lands in the last row/column.
    auto col = static_cast<std::int64_t>(std::floor((m.x - nw.x) / g.cell_mercator_m));
    auto row = static_cast<std::int64_t>(std::floor((nw.y - m.y) / g.cell_mercator_m));
    col = std::clamp<std::int64_t>(col, 0, g.cols - 1);
    row = std::clamp<std::int64_t>(row, 0, g.rows - 1);
    ++g.counts[static_cast<std::size_t>(row * g.cols + col)];
  }
  return g;
}

std::vector<Hotspot> hotspots(const HeatmapGrid& grid, std::int64_t min_count) {
  if (min_count < 1) throw DomainError("hotspot min_count must be at least 1");
  std::vector<Hotspot> out;
  for (std::int64_t r = 0; r < grid.rows; ++r) {
    for (std::int64_t c = 0; c < grid.cols; ++c) {
      if (grid.at(r, c) >= min_count) out.push_back({r, c, grid.at(r, c)});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Hotspot& a, const Hotspot& b) { return a.count > b.count; });
  return out;
}

Json to_json(const HeatmapGrid& grid) {
  Json counts = Json::array();
  for (std::int64_t r = 0; r < grid.rows; ++r) {
    Json row = Json::array();
    for (std::int64_t c = 0; c < grid.cols; ++c) row.push_back(grid.at(r, c));
    counts.push_back(row);
  }
  Json j;
  j["origin"] = {{"lat", grid.origin.lat}, {"lon", grid.origin.lon}};
  j["cell_size_m"] = grid.cell_size_m;
  j["cell_mercator_m"] = grid.cell_mercator_m;
  j["rows"] = grid.rows;
  j["cols"] = grid.cols;
  j["total"] = grid.total();
  j["remainder"] = grid.remainder;
  j["counts"] = counts;
  return j;
}

CostReport cost_comparison(const CostInputs& in) {
  if (in.panoramas_needed < 0 || in.views_per_panorama < 0 || in.aerial_tiles < 0 ||
      in.street_images_for_detected < 0 || in.street_unit_cost_micro < 0 || in.aerial_unit_cost_micro < 0) {
    throw DomainError("cost inputs must be non-negative");
  }
  CostReport c;
  c.street_only_images = in.panoramas_needed * in.views_per_panorama;
  c.combined_street_images = in.street_images_for_detected;
  c.combined_aerial_tiles = in.aerial_tiles;
  c.street_only_cost_micro = c.street_only_images * in.street_unit_cost_micro;
  c.combined_cost_micro =
      c.combined_street_images * in.street_unit_cost_micro + c.combined_aerial_tiles * in.aerial_unit_cost_micro;
  if (c.combined_street_images > 0) {
    c.reduction_factor = static_cast<double>(c.street_only_images) / static_cast<double>(c.combined_street_images);
  }
  return c;
}

std::string usd(std::int64_t micro) {
  char buf[48];
  const char* sign = micro < 0 ? "-" : "";
  const std::int64_t a = micro < 0 ? -micro : micro;
  std::snprintf(buf, sizeof(buf), "%s%" PRId64 ".%06" PRId64, sign, a / kMicroUsd, a % kMicroUsd);
  return buf;
}

Json to_json(const CostReport& c) {
  Json j;
  j["street_only_images"] = c.street_only_images;
  j["combined_street_images"] = c.combined_street_images;
  j["combined_aerial_tiles"] = c.combined_aerial_tiles;
  j["street_only_cost_usd"] = usd(c.street_only_cost_micro);
  j["combined_cost_usd"] = usd(c.combined_cost_micro);
  j["reduction_factor"] = c.reduction_factor ? Json(*c.reduction_factor) : Json(nullptr);
  if (!c.reduction_factor) j["note"] = "reduction undefined: no street images in the combined plan";
  return j;
}

Json export_geojson(const std::vector<registry::TreeRecord>& trees) {
  Json features = Json::array();
  for (const auto& t : by_id(trees)) {
    const auto tl = timeline::timeline_for(t);
    Json props;
    props["id"] = t.id;
    props["status"] = timeline::to_string(tl.status);
    if (tl.transition) {
      props["transition"] = {{"last_healthy", tl.transition->last_healthy.str()},
                             {"first_infested", tl.transition->first_infested.str()}};
    } else {
      props["transition"] = nullptr;
    }
    props["source"] = registry::to_string(t.source);
    Json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "Point"}, {"coordinates", Json::array({t.location.lon, t.location.lat})}};
    f["properties"] = props;
    features.push_back(f);
  }
  Json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = features;
  return doc;
}

Summary summarize(const std::vector<registry::TreeRecord>& trees) {
  Summary s;
  std::int64_t confirmed = 0, checked = 0;
  for (auto st : {registry::StreetStatus::pending, registry::StreetStatus::linked, registry::StreetStatus::confirmed,
                  registry::StreetStatus::unconfirmed, registry::StreetStatus::unreachable}) {
    s.street_status[std::string(registry::to_string(st))] = 0;
  }
  for (auto st : {timeline::TimelineStatus::never_infested, timeline::TimelineStatus::onset_known,
                  timeline::TimelineStatus::onset_unknown, timeline::TimelineStatus::inconsistent}) {
    s.timeline_status[std::string(timeline::to_string(st))] = 0;
  }
  for (const auto& t : trees) {
    ++s.trees;
    if (t.source == registry::TreeSource::aerial) {
      ++s.aerial;
      if (t.street == registry::StreetStatus::confirmed) ++confirmed;
      if (t.street == registry::StreetStatus::confirmed || t.street == registry::StreetStatus::unconfirmed) ++checked;
    } else {
      ++s.street_only;
    }
    ++s.street_status[std::string(registry::to_string(t.street))];
    ++s.timeline_status[std::string(timeline::to_string(timeline::timeline_for(t).status))];
  }
  if (checked > 0) s.confirmable_ratio = static_cast<double>(confirmed) / static_cast<double>(checked);
  return s;
}

Json to_json(const Summary& s) {
  Json j;
  j["trees"] = s.trees;
  j["aerial"] = s.aerial;
  j["street_only"] = s.street_only;
  j["street_status"] = s.street_status;
  j["timeline_status"] = s.timeline_status;
  j["confirmable_ratio"] = s.confirmable_ratio ? Json(*s.confirmable_ratio) : Json(nullptr);
  return j;
}

std::string timelines_jsonl(const std::vector<registry::TreeRecord>& trees) {
  std::vector<Json> lines;
  for (const auto& t : by_id(trees)) {
    Json j;
    j["id"] = t.id;
    j["lat"] = t.location.lat;
    j["lon"] = t.location.lon;
    const Json tl = timeline::to_json(timeline::timeline_for(t));
    for (const auto& [k, v] : tl.items()) j[k] = v;
    lines.push_back(j);
  }
  return io::to_jsonl(lines);
}

std::string render_html(const Summary& s, const HeatmapGrid& grid, const std::vector<Hotspot>& spots,
                        const CostReport& cost) {
  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Palm survey report</title>\n"
    << "<style>table{border-collapse:collapse}td,th{border:1px solid #999;padding:2px 6px;text-align:right}"
    << "td.z{color:#bbb}</style></head><body>\n<h1>Palm survey report</h1>\n";

  h << "<h2>Trees</h2>\n<table>\n<tr><th>total</th><td>" << s.trees << "</td></tr>\n"
    << "<tr><th>aerial</th><td>" << s.aerial << "</td></tr>\n"
    << "<tr><th>street-only</th><td>" << s.street_only << "</td></tr>\n";
  for (const auto& [k, v] : s.street_status) h << "<tr><th>street " << html_escape(k) << "</th><td>" << v << "</td></tr>\n";
  for (const auto& [k, v] : s.timeline_status) h << "<tr><th>" << html_escape(k) << "</th><td>" << v << "</td></tr>\n";
  h << "<tr><th>confirmable ratio</th><td>"
    << (s.confirmable_ratio ? io::fixed(*s.confirmable_ratio, 4) : std::string("n/a")) << "</td></tr>\n</table>\n";

  h << "<h2>Acquisition cost</h2>\n<table>\n<tr><th></th><th>street images</th><th>aerial tiles</th><th>USD</th></tr>\n"
    << "<tr><th>street only</th><td>" << cost.street_only_images << "</td><td>0</td><td>"
    << usd(cost.street_only_cost_micro) << "</td></tr>\n"
    << "<tr><th>aerial + street</th><td>" << cost.combined_street_images << "</td><td>" << cost.combined_aerial_tiles
    << "</td><td>" << usd(cost.combined_cost_micro) << "</td></tr>\n</table>\n<p>Reduction factor: "
    << (cost.reduction_factor ? io::fixed(*cost.reduction_factor, 4) : std::string("undefined")) << "</p>\n";

  h << "<h2>Hotspots</h2>\n";
  if (spots.empty()) {
    h << "<p>None.</p>\n";
  } else {
    h << "<table>\n<tr><th>row</th><th>col</th><th>south</th><th>west</th><th>north</th><th>east</th><th>trees</th></tr>\n";
    for (const auto& sp : spots) {
      const auto b = grid.cell_bounds(sp.row, sp.col);
      h << "<tr><td>" << sp.row << "</td><td>" << sp.col << "</td><td>" << io::fixed(b.south, 6) << "</td><td>"
        << io::fixed(b.west, 6) << "</td><td>" << io::fixed(b.north, 6) << "</td><td>" << io::fixed(b.east, 6)
        << "</td><td>" << sp.count << "</td></tr>\n";
    }
    h << "</table>\n";
  }

  h << "<h2>Heatmap</h2>\n<p>" << io::fixed(grid.cell_size_m, 1) << " m cells, north at the top; "
    << grid.remainder << " trees outside the area.</p>\n<table>\n";
  for (std::int64_t r = 0; r < grid.rows; ++r) {
    h << "<tr>";
    for (std::int64_t c = 0; c < grid.cols; ++c) {
      const auto v = grid.at(r, c);
      h << (v == 0 ? "<td class=\"z\">" : "<td>") << v << "</td>";
    }
    h << "</tr>\n";
  }
  h << "</table>\n</body></html>\n";
  return h.str();
}

}  // namespace palmscan::report
