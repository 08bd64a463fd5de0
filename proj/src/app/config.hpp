#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "continual/continual.hpp"

namespace crlab::app {

// Everything a run can be configured with. Task geometry keys apply to every
// task of the sequence; colors follow the task kind.
struct RunConfig {
  std::vector<sim::TaskKind> task_kinds{sim::TaskKind::kTargetReaching, sim::TaskKind::kTargetCircling};
  sim::TaskSpec geometry;
  continual::ScenarioConfig scenario;

  RunConfig();

  sim::TaskSpec task(sim::TaskKind kind) const;
  // Scenario with the task list filled in.
  continual::ScenarioConfig build() const;
  void validate() const;
};

// Flat "key = value" text; '#' starts a comment. Unknown keys, malformed
// values and invariant violations are config errors naming the key (and the
// line for parse errors).
RunConfig parse_config(const std::string& text, const std::string& what = "config");
RunConfig load_config(const std::filesystem::path& path);

// Every key with its current value, one per line in schema order. Parsing the
// snapshot yields an identical configuration.
std::string config_snapshot(const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace crlab::app
