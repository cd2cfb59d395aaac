// palmscan: plan, run, and report palm-tree infestation surveys.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "palmscan/config.hpp"
#include "palmscan/errors.hpp"
#include "palmscan/io.hpp"
#include "palmscan/pipeline.hpp"
#include "palmscan/registry.hpp"
#include "palmscan/report.hpp"
#include "palmscan/simulator.hpp"

namespace fs = std::filesystem;
using namespace palmscan;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kBackend = 3, kProvider = 4 };

config::SurveyConfig load(const std::string& path, const std::string& aoi_override) {
  auto cfg = config::load_config(path);
  if (!aoi_override.empty()) {
    double v[4];
    char tail = 0;
    if (std::sscanf(aoi_override.c_str(), "%lf,%lf,%lf,%lf%c", &v[0], &v[1], &v[2], &v[3], &tail) != 4) {
      throw ConfigError("--aoi expects south,west,north,east");
    }
    Json doc = cfg.source;
    doc["aoi"] = {{"name", "cli"}, {"box", {{"south", v[0]}, {"west", v[1]}, {"north", v[2]}, {"east", v[3]}}}};
    cfg = config::parse_config(doc, fs::absolute(path).parent_path());
  }
  return cfg;
}

std::string self_exe() {
  std::error_code ec;
  auto p = fs::read_symlink("/proc/self/exe", ec);
  return ec ? std::string("palmscan") : p.string();
}

int cmd_plan(const std::string& config_path, const std::string& aoi, bool dry_run) {
  pipeline::Survey survey(load(config_path, aoi), {dry_run, std::nullopt, &std::cerr});
  const auto s = survey.plan();
  std::cout << "tiles " << s.tiles << "\n"
            << "street_samples " << s.street_samples << "\n"
            << "street_only_images " << s.projected.street_only_images << "\n"
            << "projected_street_only_cost_usd " << report::usd(s.projected.street_only_cost_micro) << "\n";
  return kOk;
}

int cmd_run(const std::string& config_path, const std::string& aoi, const std::string& stage, bool dry_run,
            std::size_t workers) {
  pipeline::Options opts{dry_run, std::nullopt, &std::cerr};
  if (workers > 0) opts.workers = workers;
  pipeline::Survey survey(load(config_path, aoi), opts);
  std::vector<pipeline::StageResult> results;
  if (stage.empty()) {
    results = survey.run_all();
  } else {
    auto s = pipeline::stage_from_string(stage);
    if (!s || *s == pipeline::Stage::plan) {
      throw ConfigError("unknown stage \"" + stage + "\"; expected detect-aerial, link, detect-street, classify or history");
    }
    results.push_back(survey.run_stage(*s));
  }
  for (const auto& r : results) {
    std::cout << pipeline::to_string(r.stage) << (r.skipped ? " up-to-date" : " done") << " requests=" << r.requests
              << " failures=" << r.failures << " trees=" << r.trees_touched << "\n";
  }
  return kOk;
}

int cmd_report(const std::string& config_path, const std::string& aoi) {
  pipeline::Survey survey(load(config_path, aoi), {false, std::nullopt, &std::cerr});
  const auto cost = survey.write_report();
  std::cout << io::dump_pretty(report::to_json(cost));
  return kOk;
}

int cmd_cost(const report::CostInputs& in, double street_usd, double aerial_usd) {
  auto inputs = in;
  inputs.street_unit_cost_micro = config::usd_to_micro(street_usd);
  inputs.aerial_unit_cost_micro = config::usd_to_micro(aerial_usd);
  const auto c = report::cost_comparison(inputs);
  auto j = report::to_json(c);
  j["reduces_six_fold"] = c.reduces_at_least(6);
  std::cout << io::dump_pretty(j);
  return kOk;
}

struct SimulateArgs {
  std::uint64_t seed = 1;
  std::string out;
  int palms = -1;
  double density = -1.0;
  int blocks = 3;
  double infested_fraction = 0.3;
  sim::NoiseModel noise;
  bool subprocess = false;
  std::size_t workers = 4;
};

int cmd_simulate(const SimulateArgs& a) {
  sim::WorldParams p;
  p.blocks_east = p.blocks_north = a.blocks;
  p.infested_fraction = a.infested_fraction;
  if (a.palms >= 0) p.palm_count = a.palms;
  if (a.density >= 0.0) p.palm_density_per_km2 = a.density;
  const auto world = sim::generate_world(a.seed, p);
  std::vector<std::string> serve;
  if (a.subprocess) serve = {self_exe(), "serve-mock"};
  const auto config_path = sim::write_scenario(world, a.noise, a.out, a.workers, serve);
  std::cout << "palms " << world.palms.size() << "\n"
            << "panoramas " << world.panoramas.size() << "\n"
            << "config " << config_path.string() << "\n";
  return kOk;
}

int cmd_serve_mock(const std::string& world_path, const std::string& noise_text) {
  auto world = std::make_shared<const sim::SyntheticWorld>(sim::world_from_json(Json::parse(io::read_file(world_path))));
  sim::NoiseModel noise;
  if (!noise_text.empty()) {
    const bool inline_json = noise_text.front() == '{';
    noise = sim::noise_from_json(Json::parse(inline_json ? noise_text : io::read_file(noise_text)));
  }
  const sim::MockBackend backend(world, noise);
  sim::serve(backend, std::cin, std::cout);
  return kOk;
}

int cmd_score(const std::string& world_path, const std::string& registry_path) {
  const auto world = sim::world_from_json(Json::parse(io::read_file(world_path)));
  const auto reg = registry::TreeRegistry::open(registry_path);
  const auto s = sim::score_run(world, reg.all());
  Json j;
  j["palms"] = s.palms;
  j["trees"] = s.trees;
  j["matched"] = s.matched;
  j["recall"] = s.recall;
  j["precision"] = s.precision;
  j["mean_coord_error_m"] = s.mean_coord_error_m;
  j["timeline_accuracy"] = s.timeline_accuracy ? Json(*s.timeline_accuracy) : Json(nullptr);
  std::cout << io::dump_pretty(j);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Palm tree survey: aerial detection, street-level confirmation, infestation timelines"};
  app.require_subcommand(1);

  std::string config_path, aoi, stage;
  bool dry_run = false;
  std::size_t workers = 0;

  auto* plan = app.add_subcommand("plan", "Enumerate aerial tiles and street samples for the AOI");
  plan->add_option("--config", config_path, "Survey config (JSON)")->required();
  plan->add_option("--aoi", aoi, "Override the AOI box: south,west,north,east");
  plan->add_flag("--dry-run", dry_run, "Print counts without writing plan files");

  auto* run = app.add_subcommand("run", "Run pipeline stages (all remaining, or one with --stage)");
  run->add_option("--config", config_path, "Survey config (JSON)")->required();
  run->add_option("--stage", stage, "detect-aerial | link | detect-street | classify | history");
  run->add_option("--aoi", aoi, "Override the AOI box: south,west,north,east");
  run->add_flag("--dry-run", dry_run, "Report request counts without fetching or writing");
  run->add_option("--workers", workers, "Worker pool width (overrides config)")->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("report", "Write GeoJSON, heatmap, hotspots, cost and timeline reports");
  rep->add_option("--config", config_path, "Survey config (JSON)")->required();
  rep->add_option("--aoi", aoi, "Override the AOI box: south,west,north,east");

  report::CostInputs cost_in;
  double street_usd = 0.007, aerial_usd = 0.0;
  auto* cost = app.add_subcommand("cost", "Compare street-only and aerial-guided acquisition costs");
  cost->add_option("--panoramas", cost_in.panoramas_needed, "Panoramas a street-only survey visits")->required();
  cost->add_option("--street-images", cost_in.street_images_for_detected, "Street images for detected palms")
      ->required();
  cost->add_option("--aerial-tiles", cost_in.aerial_tiles, "Aerial tiles fetched");
  cost->add_option("--views", cost_in.views_per_panorama, "Views per panorama (default 4)");
  cost->add_option("--street-usd", street_usd, "Unit cost of a street image (default 0.007)");
  cost->add_option("--aerial-usd", aerial_usd, "Unit cost of an aerial tile (default 0)");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic city and a config wired to the mock backend");
  simulate->add_option("--seed", sim_args.seed, "World seed");
  simulate->add_option("--out", sim_args.out, "Output directory")->required();
  simulate->add_option("--palms", sim_args.palms, "Exact palm count (default: density)");
  simulate->add_option("--density", sim_args.density, "Palms per square kilometre");
  simulate->add_option("--blocks", sim_args.blocks, "City blocks per side");
  simulate->add_option("--infested-fraction", sim_args.infested_fraction, "Share of palms that become infested");
  simulate->add_option("--miss-rate", sim_args.noise.miss_rate, "Aerial detection miss rate");
  simulate->add_option("--fp-rate", sim_args.noise.false_positive_rate, "False positives per aerial tile");
  simulate->add_option("--jitter", sim_args.noise.bbox_jitter_sigma, "Box jitter sigma in pixels");
  simulate->add_flag("--subprocess", sim_args.subprocess, "Wire backends as `palmscan serve-mock` processes");
  simulate->add_option("--workers", sim_args.workers, "Worker pool width written to the config");

  std::string world_path, noise_text, registry_path;
  auto* serve = app.add_subcommand("serve-mock", "Serve the simulator's mock backend over stdin/stdout");
  serve->add_option("--world", world_path, "world.json from `simulate`")->required();
  serve->add_option("--noise", noise_text, "Noise model: inline JSON or a file");

  auto* score = app.add_subcommand("score", "Score a registry against a simulated world");
  score->add_option("--world", world_path, "world.json from `simulate`")->required();
  score->add_option("--registry", registry_path, "registry.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*plan) return cmd_plan(config_path, aoi, dry_run);
    if (*run) return cmd_run(config_path, aoi, stage, dry_run, workers);
    if (*rep) return cmd_report(config_path, aoi);
    if (*cost) return cmd_cost(cost_in, street_usd, aerial_usd);
    if (*simulate) return cmd_simulate(sim_args);
    if (*serve) return cmd_serve_mock(world_path, noise_text);
    if (*score) return cmd_score(world_path, registry_path);
  } catch (const ConfigError& e) {
    std::cerr << "palmscan: " << e.what() << "\n";
    return kConfig;
  } catch (const DomainError& e) {
    std::cerr << "palmscan: " << e.what() << "\n";
    return kConfig;
  } catch (const Json::exception& e) {
    std::cerr << "palmscan: malformed input: " << e.what() << "\n";
    return kConfig;
  } catch (const BackendError& e) {
    std::cerr << "palmscan: backend error: " << e.what() << "\n";
    return kBackend;
  } catch (const ProtocolError& e) {
    std::cerr << "palmscan: backend protocol error: " << e.what() << "\n";
    return kBackend;
  } catch (const ProviderError& e) {
    std::cerr << "palmscan: provider error: " << e.what() << "\n";
    return kProvider;
  } catch (const std::exception& e) {
    std::cerr << "palmscan: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
