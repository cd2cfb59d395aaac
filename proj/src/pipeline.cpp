#include "palmscan/pipeline.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <set>

#include "palmscan/errors.hpp"
#include "palmscan/linker.hpp"
#include "palmscan/provider.hpp"
#include "palmscan/registry.hpp"
#include "palmscan/timeline.hpp"

namespace palmscan::pipeline {

namespace {

constexpr std::pair<Stage, std::string_view> kStageNames[] = {
    {Stage::plan, "plan"},     {Stage::detect_aerial, "detect-aerial"}, {Stage::link, "link"},
    {Stage::detect_street, "detect-street"}, {Stage::classify, "classify"}, {Stage::history, "history"}};

std::optional<Stage> previous(Stage s) {
  if (s == Stage::plan) return std::nullopt;
  return static_cast<Stage>(static_cast<int>(s) - 1);
}

std::string file_digest(const std::optional<std::filesystem::path>& p) {
  if (!p || !std::filesystem::exists(*p)) return "-";
  return io::hex64(io::fnv1a64(io::read_file(*p)));
}

// Field of a stage's state record, empty when absent.
std::string stage_field(const Json& state, std::string_view stage, const char* field) {
  const auto stages = state.find("stages");
  if (stages == state.end() || !stages->is_object()) return {};
  const auto rec = stages->find(std::string(stage));
  if (rec == stages->end() || !rec->is_object()) return {};
  return rec->value(field, std::string());
}

bool has_stage(const Json& state, std::string_view stage) {
  const auto stages = state.find("stages");
  return stages != state.end() && stages->is_object() && stages->contains(std::string(stage));
}

double token(double heading) { return std::stod(heading_token(heading)); }

// Latest observation that carries a street view.
registry::Observation* current_view(registry::TreeRecord& t) {
  registry::Observation* cur = nullptr;
  for (auto& o : t.observations) {
    if (o.pano_id && o.heading && (!cur || cur->capture_date <= o.capture_date)) cur = &o;
  }
  return cur;
}

std::vector<registry::TreeRecord> with_street(const registry::TreeRegistry& reg, registry::StreetStatus s) {
  std::vector<registry::TreeRecord> out;
  for (auto& t : reg.all()) {
    if (t.street == s) out.push_back(std::move(t));
  }
  return out;
}

std::vector<PanoramaRecord> load_catalog(const config::SurveyConfig& cfg) {
  if (!cfg.panoramas) throw ConfigError("this stage needs a panorama catalog; set \"panoramas\" in the config");
  if (!std::filesystem::exists(*cfg.panoramas)) {
    throw ConfigError("panorama catalog " + cfg.panoramas->string() + " does not exist");
  }
  try {
    return parse_panorama_catalog(io::read_jsonl(*cfg.panoramas));
  } catch (const DomainError& e) {
    throw ConfigError(std::string("bad panorama catalog: ") + e.what());
  }
}

StreetImageRequest view_request(const config::SurveyConfig& cfg, const linker::PanoramaIndex& index,
                                const std::string& pano_id, double heading) {
  StreetImageRequest r;
  r.pano_id = pano_id;
  if (auto p = index.find(pano_id)) r.location = p->location;
  r.heading = heading;
  r.fov = cfg.fov;
  r.width = r.height = cfg.street_image_size;
  return r;
}

}  // namespace

std::string_view to_string(Stage s) noexcept {
  for (const auto& [st, name] : kStageNames) {
    if (st == s) return name;
  }
  return "plan";
}

std::optional<Stage> stage_from_string(std::string_view s) noexcept {
  for (const auto& [st, name] : kStageNames) {
    if (name == s) return st;
  }
  return std::nullopt;
}

Survey::Survey(config::SurveyConfig cfg, Options opts) : cfg_(std::move(cfg)), opts_(opts) {}

void Survey::log(const std::string& msg) const {
  if (opts_.log) *opts_.log << msg << '\n';
}

gateway::ChannelFactory Survey::backend(const std::string& role) const {
  const std::optional<config::BackendSpec>* spec = nullptr;
  if (role == "aerial") spec = &cfg_.aerial_backend;
  if (role == "street") spec = &cfg_.street_backend;
  if (role == "classify") spec = &cfg_.classify_backend;
  if (!spec || !*spec) throw BackendError("no \"" + role + "\" backend configured (backends." + role + ")");
  const auto& b = **spec;
  try {
    switch (b.kind) {
      case config::BackendSpec::Kind::command:
        return gateway::subprocess_factory(b.argv, cfg_.backend_timeout);
      case config::BackendSpec::Kind::mock: {
        auto world = std::make_shared<const sim::SyntheticWorld>(sim::world_from_json(Json::parse(io::read_file(b.world))));
        return sim::mock_factory(std::move(world), b.noise);
      }
      case config::BackendSpec::Kind::replay:
        return gateway::replay_factory(Json::parse(io::read_file(b.manifest)));
    }
  } catch (const Json::exception& e) {
    throw BackendError("cannot load \"" + role + "\" backend: " + e.what());
  } catch (const PersistenceError& e) {
    throw BackendError("cannot load \"" + role + "\" backend: " + e.what());
  } catch (const DomainError& e) {
    throw BackendError("cannot load \"" + role + "\" backend: " + e.what());
  }
  throw BackendError("unsupported backend kind for " + role);
}

Json Survey::load_state() const {
  const auto path = cfg_.workspace / "state.json";
  if (!std::filesystem::exists(path)) return Json{{"schema", "palmscan.state"}, {"stages", Json::object()}};
  try {
    return Json::parse(io::read_file(path));
  } catch (const Json::exception& e) {
    throw PersistenceError("corrupt " + path.string() + ": " + e.what());
  }
}

std::string Survey::inputs_digest(Stage s, const Json& state) const {
  // Everything a stage reads: the config, the files it names, and the
  // outputs of the stage before it.
  std::string key = cfg_.source.dump();
  key += "|streets=" + file_digest(cfg_.streets);
  key += "|panoramas=" + file_digest(cfg_.panoramas);
  for (const auto* b : {&cfg_.aerial_backend, &cfg_.street_backend, &cfg_.classify_backend}) {
    if (!*b) continue;
    key += "|backend=" + file_digest((*b)->kind == config::BackendSpec::Kind::mock ? std::optional((*b)->world)
                                     : (*b)->kind == config::BackendSpec::Kind::replay ? std::optional((*b)->manifest)
                                                                                        : std::nullopt);
  }
  key += "|stage=";
  key += to_string(s);
  if (auto prev = previous(s)) {
    key += "|prev=" + stage_field(state, to_string(*prev), "outputs");
  }
  return io::hex64(io::fnv1a64(key));
}

PlanSummary Survey::plan() {
  PlanSummary out;
  const auto tiles = planner::enumerate_tiles(cfg_.aoi, cfg_.zoom, cfg_.tile_size);
  std::vector<planner::Polyline> streets;
  if (cfg_.streets) {
    try {
      streets = planner::parse_streets_geojson(Json::parse(io::read_file(*cfg_.streets)));
    } catch (const Json::exception& e) {
      throw ConfigError("streets file is not valid GeoJSON: " + std::string(e.what()));
    } catch (const PersistenceError& e) {
      throw ConfigError(e.what());
    } catch (const DomainError& e) {
      throw ConfigError(std::string("bad streets file: ") + e.what());
    }
  }
  // Only street points inside the survey area count toward the plan.
  auto samples = planner::plan_street_samples(streets, cfg_.sample_spacing_m, cfg_.headings);
  std::erase_if(samples.samples, [&](const planner::StreetSample& s) { return !cfg_.aoi.contains(s.location); });

  out.tiles = tiles.tiles.size();
  out.street_samples = samples.samples.size();
  report::CostInputs in;
  in.panoramas_needed = static_cast<std::int64_t>(out.street_samples);
  in.views_per_panorama = static_cast<std::int64_t>(cfg_.headings.size());
  in.aerial_tiles = static_cast<std::int64_t>(out.tiles);
  in.street_unit_cost_micro = cfg_.provider.street_unit_cost_micro;
  in.aerial_unit_cost_micro = cfg_.provider.aerial_unit_cost_micro;
  out.projected = report::cost_comparison(in);

  log("plan: " + std::to_string(out.tiles) + " aerial tiles at zoom " + std::to_string(cfg_.zoom) + ", " +
      std::to_string(out.street_samples) + " street sample points");
  log("plan: street-only survey needs " + std::to_string(out.projected.street_only_images) + " images, " +
      report::usd(out.projected.street_only_cost_micro) + " USD");
  if (opts_.dry_run) return out;

  auto state = load_state();
  const auto tiles_text = io::dump_pretty(planner::to_json(tiles, cfg_.aoi));
  const auto samples_text = io::dump_pretty(planner::to_json(samples));
  io::write_file_atomic(cfg_.workspace / "plan" / "tiles.json", tiles_text);
  io::write_file_atomic(cfg_.workspace / "plan" / "street_samples.json", samples_text);
  const auto digest = inputs_digest(Stage::plan, state);
  const auto outputs = io::hex64(io::fnv1a64(tiles_text + samples_text));
  if (stage_field(state, "plan", "inputs") != digest || stage_field(state, "plan", "outputs") != outputs) {
    // A new plan invalidates everything downstream.
    state["stages"] = Json{{"plan", {{"inputs", digest}, {"outputs", outputs}}}};
  }
  io::write_file_atomic(cfg_.workspace / "state.json", io::dump_pretty(state));
  return out;
}

StageResult Survey::run_stage(Stage s) {
  if (s == Stage::plan) {
    plan();
    return {};
  }
  auto state = load_state();
  const auto prev = *previous(s);
  if (!has_stage(state, to_string(prev))) {
    const std::string how = prev == Stage::plan ? "palmscan plan" : "palmscan run --stage " + std::string(to_string(prev));
    throw StageOrderError("stage " + std::string(to_string(s)) + " needs stage " + std::string(to_string(prev)) +
                          " first; run `" + how + "`");
  }
  const auto digest = inputs_digest(s, state);
  const std::string name(to_string(s));
  if (has_stage(state, name) && stage_field(state, name, "inputs") == digest) {
    log(name + ": up to date");
    StageResult r;
    r.stage = s;
    r.skipped = true;
    return r;
  }
  if (!std::filesystem::exists(registry_path()) && s != Stage::detect_aerial) {
    throw PersistenceError("registry " + registry_path().string() + " is missing; rerun from detect-aerial");
  }

  StageResult r;
  switch (s) {
    case Stage::detect_aerial: r = detect_aerial(); break;
    case Stage::link: r = link(); break;
    case Stage::detect_street: r = detect_street(); break;
    case Stage::classify: r = classify(); break;
    case Stage::history: r = history(); break;
    case Stage::plan: break;
  }
  r.stage = s;
  log(name + ": " + std::to_string(r.requests) + " requests, " + std::to_string(r.failures) + " failed, " +
      std::to_string(r.trees_touched) + " trees updated");
  if (opts_.dry_run) return r;

  const auto outputs = io::hex64(io::fnv1a64(io::read_file(registry_path())));
  Json stages = Json::object();
  for (const auto& [st, nm] : kStageNames) {
    if (st < s && has_stage(state, nm)) stages[std::string(nm)] = state["stages"][std::string(nm)];
  }
  stages[name] = {{"inputs", digest}, {"outputs", outputs}, {"requests", r.requests}, {"failures", r.failures}};
  state["stages"] = stages;
  io::write_file_atomic(cfg_.workspace / "state.json", io::dump_pretty(state));
  return r;
}

std::vector<StageResult> Survey::run_all() {
  std::vector<StageResult> out;
  for (Stage s : kRunStages) out.push_back(run_stage(s));
  return out;
}

StageResult Survey::detect_aerial() {
  StageResult r;
  const auto plan = planner::tile_plan_from_json(Json::parse(io::read_file(cfg_.workspace / "plan" / "tiles.json")));
  r.requests = plan.tiles.size();
  if (opts_.dry_run) return r;

  auto factory = backend("aerial");
  provider::ImageryClient client(cfg_.provider, cfg_.cache_dir);
  std::vector<gateway::DetectionRequest> requests(plan.tiles.size());
  provider::parallel_for(plan.tiles.size(), workers(), [&](std::size_t i) {
    requests[i] = gateway::DetectionRequest::aerial(client.fetch_tile(plan.tiles[i]).string(), plan.tiles[i]);
  });
  const auto batch = gateway::run_detection_batch(requests, factory, {cfg_.score_threshold, workers()});
  r.failures = batch.failures.size();
  for (const auto& f : batch.failures) log("detect-aerial: " + requests[f.request_index].image_ref + ": " + f.message);

  auto trees = gateway::merge_candidates(gateway::georeference(batch.detections), cfg_.dedup_radius_m);
  std::erase_if(trees, [&](const registry::TreeRecord& t) { return !cfg_.aoi.contains(t.location); });
  auto reg = registry::TreeRegistry::open(registry_path(), cfg_.dedup_radius_m);
  for (const auto& t : trees) reg.upsert(t);
  r.trees_touched = trees.size();
  r.registry_changed = reg.save(registry_path());
  return r;
}

StageResult Survey::link() {
  StageResult r;
  const linker::PanoramaIndex index(load_catalog(cfg_), cfg_.visibility_radius_m);
  auto reg = registry::TreeRegistry::open(registry_path(), cfg_.dedup_radius_m);
  auto pending = with_street(reg, registry::StreetStatus::pending);
  r.requests = pending.size();
  if (opts_.dry_run) return r;
  for (auto& t : pending) {
    const auto pano = index.current_for(t.location);
    if (!pano) {
      t.street = registry::StreetStatus::unreachable;
    } else {
      registry::Observation o;
      o.capture_date = pano->capture_date;
      o.pano_id = pano->pano_id;
      o.heading = pano->location == t.location ? 0.0 : token(linker::camera_heading(pano->location, t.location));
      t.observations.push_back(o);
      t.street = registry::StreetStatus::linked;
    }
    reg.replace(t);
    ++r.trees_touched;
  }
  r.registry_changed = reg.save(registry_path());
  return r;
}

StageResult Survey::detect_street() {
  StageResult r;
  const linker::PanoramaIndex index(load_catalog(cfg_), cfg_.visibility_radius_m);
  auto reg = registry::TreeRegistry::open(registry_path(), cfg_.dedup_radius_m);
  auto linked = with_street(reg, registry::StreetStatus::linked);

  std::vector<StreetImageRequest> views;
  std::map<std::string, std::size_t> view_of;  // street ref -> index
  std::vector<std::string> tree_ref(linked.size());
  for (std::size_t i = 0; i < linked.size(); ++i) {
    const auto* cur = current_view(linked[i]);
    if (!cur) throw PersistenceError("linked tree " + linked[i].id + " has no street observation");
    tree_ref[i] = street_image_ref(*cur->pano_id, *cur->heading);
    if (view_of.emplace(tree_ref[i], views.size()).second) {
      views.push_back(view_request(cfg_, index, *cur->pano_id, *cur->heading));
    }
  }
  r.requests = views.size();
  if (opts_.dry_run) return r;

  auto factory = backend("street");
  provider::ImageryClient client(cfg_.provider, cfg_.cache_dir);
  std::vector<gateway::DetectionRequest> requests(views.size());
  provider::parallel_for(views.size(), workers(), [&](std::size_t i) {
    requests[i] = gateway::DetectionRequest::street_view(client.fetch_street(views[i]).string(), views[i]);
  });
  const auto batch = gateway::run_detection_batch(requests, factory, {cfg_.score_threshold, workers()});
  std::set<std::string> failed;
  for (const auto& f : batch.failures) {
    failed.insert(requests[f.request_index].image_ref);
    log("detect-street: " + requests[f.request_index].image_ref + ": " + f.message);
  }
  r.failures = batch.failures.size();
  std::map<std::string, std::vector<geo::PixelBox>> boxes;
  for (const auto& d : batch.detections) boxes[d.request.image_ref].push_back(d.box);

  for (std::size_t i = 0; i < linked.size(); ++i) {
    const auto& path = requests[view_of.at(tree_ref[i])].image_ref;
    if (failed.count(path)) continue;  // stays linked
    auto& t = linked[i];
    auto crown = linker::pick_target_crown(boxes[path], cfg_.street_image_size);
    if (crown) {
      current_view(t)->crown_box = crown;
      t.street = registry::StreetStatus::confirmed;
    } else {
      t.street = registry::StreetStatus::unconfirmed;
    }
    reg.replace(t);
    ++r.trees_touched;
  }
  r.registry_changed = reg.save(registry_path());
  return r;
}

StageResult Survey::classify() {
  StageResult r;
  auto reg = registry::TreeRegistry::open(registry_path(), cfg_.dedup_radius_m);
  std::vector<registry::TreeRecord> todo;
  std::vector<std::string> crops;
  provider::ImageryClient client(cfg_.provider, cfg_.cache_dir);
  for (auto& t : with_street(reg, registry::StreetStatus::confirmed)) {
    auto* cur = current_view(t);
    if (!cur || !cur->crown_box || cur->classification) continue;
    crops.push_back(crown_crop_ref(client.street_path(*cur->pano_id, *cur->heading).string(), *cur->crown_box));
    todo.push_back(std::move(t));
  }
  r.requests = crops.size();
  if (opts_.dry_run) return r;

  const auto batch = gateway::run_classification_batch(crops, backend("classify"), workers());
  r.failures = batch.failures.size();
  for (const auto& f : batch.failures) log("classify: " + crops[f.request_index] + ": " + f.message);
  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (!batch.results[i]) continue;
    current_view(todo[i])->classification = batch.results[i];
    reg.replace(todo[i]);
    ++r.trees_touched;
  }
  r.registry_changed = reg.save(registry_path());
  return r;
}

StageResult Survey::history() {
  StageResult r;
  const linker::PanoramaIndex index(load_catalog(cfg_), cfg_.visibility_radius_m);
  auto reg = registry::TreeRegistry::open(registry_path(), cfg_.dedup_radius_m);
  std::vector<registry::TreeRecord> infested;
  for (auto& t : with_street(reg, registry::StreetStatus::confirmed)) {
    const auto* cur = current_view(t);
    if (cur && cur->classification && cur->classification->label() == CrownLabel::infested) {
      infested.push_back(std::move(t));
    }
  }
  r.requests = infested.size();
  if (opts_.dry_run) return r;

  provider::ImageryClient client(cfg_.provider, cfg_.cache_dir);
  timeline::HistoryBackends hb;
  hb.detect = backend("street");
  hb.classify = backend("classify");
  hb.workers = workers();
  hb.score_threshold = cfg_.score_threshold;
  hb.street_image_path = [&](const StreetImageRequest& req) {
    auto full = req;
    full.fov = cfg_.fov;
    full.width = full.height = cfg_.street_image_size;
    return client.fetch_street(full).string();
  };
  const auto outcomes = timeline::classify_histories(infested, index, hb);
  for (std::size_t i = 0; i < infested.size(); ++i) {
    r.failures += outcomes[i].failed_requests;
    auto& t = infested[i];
    t.observations.insert(t.observations.end(), outcomes[i].new_observations.begin(),
                          outcomes[i].new_observations.end());
    reg.replace(t);
    ++r.trees_touched;
  }
  r.registry_changed = reg.save(registry_path());
  return r;
}

report::CostReport Survey::write_report() {
  std::vector<registry::TreeRecord> trees;
  if (std::filesystem::exists(registry_path())) {
    trees = registry::TreeRegistry::open(registry_path(), cfg_.dedup_radius_m).all();
  } else {
    log("report: no registry yet; writing an empty report");
  }

  report::CostInputs in;
  in.views_per_panorama = static_cast<std::int64_t>(cfg_.headings.size());
  in.street_unit_cost_micro = cfg_.provider.street_unit_cost_micro;
  in.aerial_unit_cost_micro = cfg_.provider.aerial_unit_cost_micro;
  const auto plan_dir = cfg_.workspace / "plan";
  if (std::filesystem::exists(plan_dir / "tiles.json")) {
    in.aerial_tiles = Json::parse(io::read_file(plan_dir / "tiles.json")).at("tile_count").get<std::int64_t>();
  }
  if (std::filesystem::exists(plan_dir / "street_samples.json")) {
    in.panoramas_needed =
        Json::parse(io::read_file(plan_dir / "street_samples.json")).at("sample_count").get<std::int64_t>();
  }
  std::set<std::string> views;
  for (auto t : trees) {
    if (const auto* cur = current_view(t)) views.insert(street_image_ref(*cur->pano_id, *cur->heading));
  }
  in.street_images_for_detected = static_cast<std::int64_t>(views.size());
  const auto cost = report::cost_comparison(in);

  const auto grid = report::build_heatmap(trees, cfg_.aoi, cfg_.heatmap_cell_m);
  const auto spots = report::hotspots(grid, cfg_.hotspot_min_count);
  const auto summary = report::summarize(trees);

  Json spots_json = Json::array();
  for (const auto& sp : spots) {
    const auto b = grid.cell_bounds(sp.row, sp.col);
    spots_json.push_back({{"row", sp.row},
                          {"col", sp.col},
                          {"count", sp.count},
                          {"bounds", {{"south", b.south}, {"west", b.west}, {"north", b.north}, {"east", b.east}}}});
  }
  auto cost_json = report::to_json(cost);
  const provider::ImageryClient client(cfg_.provider, cfg_.cache_dir);
  cost_json["ledger_usd"] = report::usd(client.ledger_cost_micro());

  const auto dir = report_dir();
  io::write_file_atomic(dir / "trees.geojson", io::dump_pretty(report::export_geojson(trees)));
  io::write_file_atomic(dir / "heatmap.json", io::dump_pretty(report::to_json(grid)));
  io::write_file_atomic(dir / "hotspots.json", io::dump_pretty(spots_json));
  io::write_file_atomic(dir / "cost.json", io::dump_pretty(cost_json));
  io::write_file_atomic(dir / "summary.json", io::dump_pretty(report::to_json(summary)));
  io::write_file_atomic(dir / "timelines.jsonl", report::timelines_jsonl(trees));
  io::write_file_atomic(dir / "report.html", report::render_html(summary, grid, spots, cost));
  log("report: " + std::to_string(summary.trees) + " trees, " + std::to_string(spots.size()) + " hotspots, written to " +
      dir.string());
  return cost;
}

}  // namespace palmscan::pipeline
