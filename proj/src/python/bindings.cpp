#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "palmscan/config.hpp"
#include "palmscan/errors.hpp"
#include "palmscan/linker.hpp"
#include "palmscan/metrics.hpp"
#include "palmscan/pipeline.hpp"
#include "palmscan/registry.hpp"
#include "palmscan/report.hpp"
#include "palmscan/simulator.hpp"
#include "palmscan/timeline.hpp"

namespace py = pybind11;
using namespace palmscan;

namespace {

using LatLon = std::pair<double, double>;
using Box = std::tuple<double, double, double, double>;

py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

geo::GeoPoint point(const LatLon& p) { return {p.first, p.second}; }
LatLon latlon(const geo::GeoPoint& p) { return {p.lat, p.lon}; }
geo::PixelBox pixel_box(const Box& b) { return {std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b)}; }

ClassificationResult probs_of(const std::array<double, 3>& p) {
  ClassificationResult c;
  c.probs = p;
  if (!c.normalized()) throw DomainError("probabilities must lie in [0,1] and sum to 1");
  return c;
}

Json stage_json(const pipeline::StageResult& r) {
  return {{"stage", pipeline::to_string(r.stage)},
          {"skipped", r.skipped},
          {"requests", r.requests},
          {"failures", r.failures},
          {"trees_touched", r.trees_touched}};
}

Json score_json(const sim::RunScore& s) {
  return {{"palms", s.palms},
          {"trees", s.trees},
          {"matched", s.matched},
          {"recall", s.recall},
          {"precision", s.precision},
          {"mean_coord_error_m", s.mean_coord_error_m},
          {"timeline_accuracy", s.timeline_accuracy ? Json(*s.timeline_accuracy) : Json(nullptr)}};
}

class PySurvey {
 public:
  PySurvey(const std::filesystem::path& config_path, std::optional<std::size_t> workers, bool dry_run)
      : survey_(config::load_config(config_path), {dry_run, workers, nullptr}) {}

  py::object plan() {
    pipeline::PlanSummary s;
    {
      py::gil_scoped_release release;
      s = survey_.plan();
    }
    return to_py({{"tiles", s.tiles}, {"street_samples", s.street_samples}, {"projected", report::to_json(s.projected)}});
  }

  py::object run_stage(const std::string& name) {
    const auto stage = pipeline::stage_from_string(name);
    if (!stage) throw ConfigError("unknown stage \"" + name + "\"");
    pipeline::StageResult r;
    {
      py::gil_scoped_release release;
      r = survey_.run_stage(*stage);
    }
    return to_py(stage_json(r));
  }

  py::object run_all() {
    std::vector<pipeline::StageResult> rs;
    {
      py::gil_scoped_release release;
      rs = survey_.run_all();
    }
    Json out = Json::array();
    for (const auto& r : rs) out.push_back(stage_json(r));
    return to_py(out);
  }

  py::object write_report() {
    report::CostReport c;
    {
      py::gil_scoped_release release;
      c = survey_.write_report();
    }
    return to_py(report::to_json(c));
  }

  std::filesystem::path registry_path() const { return survey_.registry_path(); }
  std::filesystem::path report_dir() const { return survey_.report_dir(); }

 private:
  pipeline::Survey survey_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Palm survey core: georeferencing, timelines, metrics, cost model, simulator and pipeline";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<BackendError>(m, "BackendError", error.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", error.ptr());
  py::register_exception<ProviderError>(m, "ProviderError", error.ptr());
  py::register_exception<PersistenceError>(m, "PersistenceError", error.ptr());

  m.def("geo_to_mercator", [](double lat, double lon) {
    const auto p = geo::geo_to_mercator({lat, lon});
    return std::make_pair(p.x, p.y);
  }, py::arg("lat"), py::arg("lon"));
  m.def("mercator_to_geo", [](double x, double y) { return latlon(geo::mercator_to_geo({x, y})); }, py::arg("x"),
        py::arg("y"));
  m.def("tile_bounds", [](int z, std::int64_t x, std::int64_t y) {
    const auto b = geo::tile_bounds({z, x, y});
    return std::make_tuple(b.south, b.west, b.north, b.east);
  }, py::arg("z"), py::arg("x"), py::arg("y"), "Tile extent as (south, west, north, east).");
  m.def("tile_for_point", [](double lat, double lon, int zoom) {
    const auto t = geo::tile_for_point({lat, lon}, zoom);
    return std::make_tuple(t.zoom, t.x, t.y);
  }, py::arg("lat"), py::arg("lon"), py::arg("zoom"));
  m.def("pixel_to_geo", [](std::tuple<int, std::int64_t, std::int64_t> t, double px, double py_, int tile_size) {
    return latlon(geo::pixel_to_geo({std::get<0>(t), std::get<1>(t), std::get<2>(t)}, {px, py_}, tile_size));
  }, py::arg("tile"), py::arg("px"), py::arg("py"), py::arg("tile_size") = kAerialTileSize);
  m.def("box_center_geo", [](std::tuple<int, std::int64_t, std::int64_t> t, const Box& b, int tile_size) {
    return latlon(geo::box_center_geo({std::get<0>(t), std::get<1>(t), std::get<2>(t)}, pixel_box(b), tile_size));
  }, py::arg("tile"), py::arg("box"), py::arg("tile_size") = kAerialTileSize);
  m.def("haversine_m", [](const LatLon& a, const LatLon& b) { return geo::haversine_m(point(a), point(b)); });
  m.def("bearing_deg", [](const LatLon& a, const LatLon& b) { return geo::bearing_deg(point(a), point(b)); });

  m.def("camera_heading", [](const LatLon& pano, const LatLon& tree) {
    return linker::camera_heading(point(pano), point(tree));
  }, py::arg("pano"), py::arg("tree"));
  m.def("pixel_shift_deg", [](const Box& b, int width, double fov) {
    return linker::pixel_shift_deg(pixel_box(b), width, fov);
  }, py::arg("box"), py::arg("image_width") = kStreetImageSize, py::arg("fov") = kDefaultFov);

  m.def("build_timeline", [](const std::vector<std::pair<std::string, std::array<double, 3>>>& obs) {
    std::vector<std::pair<YearMonth, ClassificationResult>> pts;
    for (const auto& [d, p] : obs) pts.emplace_back(YearMonth::parse(d), probs_of(p));
    return to_py(timeline::to_json(timeline::build_timeline(pts)));
  }, py::arg("observations"), "Timeline from [(\"YYYY-MM\", [p_healthy, p_infested, p_unknown]), ...].");

  m.def("average_precision", [](const std::vector<std::tuple<std::string, Box, double>>& dets,
                                const std::vector<std::pair<std::string, Box>>& gts, double threshold) {
    std::vector<gateway::Detection> ds;
    for (const auto& [ref, b, score] : dets) {
      gateway::Detection d;
      d.box = pixel_box(b);
      d.score = score;
      d.label = "palm";
      d.request.image_ref = ref;
      ds.push_back(d);
    }
    std::vector<metrics::GroundTruthBox> gs;
    for (const auto& [ref, b] : gts) gs.push_back({ref, pixel_box(b), "palm"});
    return metrics::average_precision(ds, gs, threshold).ap;
  }, py::arg("detections"), py::arg("ground_truth"), py::arg("iou_threshold") = 0.5);
  m.def("classification_metrics", [](const std::vector<std::pair<std::string, std::array<double, 3>>>& pairs) {
    std::vector<std::pair<CrownLabel, ClassificationResult>> in;
    for (const auto& [truth, p] : pairs) {
      const auto l = crown_label_from_string(truth);
      if (!l) throw DomainError("unknown label \"" + truth + "\"");
      in.emplace_back(*l, probs_of(p));
    }
    const auto r = metrics::classification_metrics(in);
    return to_py({{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}, {"precision", r.precision},
                  {"recall", r.recall}, {"f1", r.f1}, {"auc", r.auc ? Json(*r.auc) : Json(nullptr)}});
  }, py::arg("pairs"));

  m.def("cost_comparison", [](std::int64_t panoramas, std::int64_t street_images, std::int64_t aerial_tiles,
                              std::int64_t views, double street_usd, double aerial_usd) {
    report::CostInputs in;
    in.panoramas_needed = panoramas;
    in.street_images_for_detected = street_images;
    in.aerial_tiles = aerial_tiles;
    in.views_per_panorama = views;
    in.street_unit_cost_micro = config::usd_to_micro(street_usd);
    in.aerial_unit_cost_micro = config::usd_to_micro(aerial_usd);
    const auto c = report::cost_comparison(in);
    auto j = report::to_json(c);
    j["reduces_six_fold"] = c.reduces_at_least(6);
    return to_py(j);
  }, py::arg("panoramas"), py::arg("street_images"), py::arg("aerial_tiles") = 0, py::arg("views") = 4,
        py::arg("street_usd") = 0.007, py::arg("aerial_usd") = 0.0);

  m.def("simulate", [](const std::filesystem::path& out, std::uint64_t seed, std::optional<int> palms,
                       std::optional<double> density, int blocks, double infested_fraction, double miss_rate,
                       double fp_rate, double jitter, std::size_t workers) {
    sim::WorldParams p;
    p.blocks_east = p.blocks_north = blocks;
    p.infested_fraction = infested_fraction;
    p.palm_count = palms;
    if (density) p.palm_density_per_km2 = *density;
    sim::NoiseModel n;
    n.miss_rate = miss_rate;
    n.false_positive_rate = fp_rate;
    n.bbox_jitter_sigma = jitter;
    return sim::write_scenario(sim::generate_world(seed, p), n, out, workers);
  }, py::arg("out"), py::arg("seed") = 1, py::arg("palms") = py::none(), py::arg("density") = py::none(),
        py::arg("blocks") = 3, py::arg("infested_fraction") = 0.3, py::arg("miss_rate") = 0.0,
        py::arg("fp_rate") = 0.0, py::arg("jitter") = 0.0, py::arg("workers") = 4,
        "Writes a synthetic city and a mock-backed config; returns the config path.");

  m.def("score", [](const std::filesystem::path& world, const std::filesystem::path& registry) {
    const auto w = sim::world_from_json(Json::parse(io::read_file(world)));
    return to_py(score_json(sim::score_run(w, registry::TreeRegistry::open(registry).all())));
  }, py::arg("world"), py::arg("registry"));

  py::class_<PySurvey>(m, "Survey")
      .def(py::init<const std::filesystem::path&, std::optional<std::size_t>, bool>(), py::arg("config"),
           py::arg("workers") = py::none(), py::arg("dry_run") = false)
      .def("plan", &PySurvey::plan)
      .def("run_stage", &PySurvey::run_stage, py::arg("stage"))
      .def("run_all", &PySurvey::run_all)
      .def("write_report", &PySurvey::write_report)
      .def_property_readonly("registry_path", &PySurvey::registry_path)
      .def_property_readonly("report_dir", &PySurvey::report_dir);
}
