#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "palmscan/config.hpp"
#include "palmscan/gateway.hpp"
#include "palmscan/report.hpp"

namespace palmscan::pipeline {

enum class Stage { plan, detect_aerial, link, detect_street, classify, history };

inline constexpr Stage kRunStages[] = {Stage::detect_aerial, Stage::link, Stage::detect_street, Stage::classify,
                                       Stage::history};

std::string_view to_string(Stage s) noexcept;
std::optional<Stage> stage_from_string(std::string_view s) noexcept;

// A stage was requested before the stages it depends on.
class StageOrderError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct Options {
  bool dry_run = false;
  std::optional<std::size_t> workers;  // overrides the config
  std::ostream* log = nullptr;
};

struct StageResult {
  Stage stage = Stage::plan;
  bool skipped = false;  // already complete for these inputs
  std::size_t requests = 0;
  std::size_t failures = 0;
  std::size_t trees_touched = 0;
  bool registry_changed = false;
};

struct PlanSummary {
  std::size_t tiles = 0;
  std::size_t street_samples = 0;
  report::CostReport projected;  // street-only cost of the sample plan
};

// Workspace layout:
//   plan/tiles.json, plan/street_samples.json
//   registry.jsonl
//   state.json        stage completion digests
//   report/...
//   cache/...         imagery (unless provider.cache_dir moves it)
class Survey {
 public:
  Survey(config::SurveyConfig cfg, Options opts = {});

  PlanSummary plan();
  StageResult run_stage(Stage s);
  std::vector<StageResult> run_all();
  // Writes the report directory and returns the cost section.
  report::CostReport write_report();

  std::filesystem::path registry_path() const { return cfg_.workspace / "registry.jsonl"; }
  std::filesystem::path report_dir() const { return cfg_.workspace / "report"; }
  const config::SurveyConfig& config() const noexcept { return cfg_; }

  // Backend for a role; throws BackendError when the role is not configured.
  gateway::ChannelFactory backend(const std::string& role) const;

 private:
  StageResult detect_aerial();
  StageResult link();
  StageResult detect_street();
  StageResult classify();
  StageResult history();

  std::size_t workers() const noexcept { return opts_.workers.value_or(cfg_.workers); }
  void log(const std::string& msg) const;
  Json load_state() const;
  std::string inputs_digest(Stage s, const Json& state) const;

  config::SurveyConfig cfg_;
  Options opts_;
};

}  // namespace palmscan::pipeline
