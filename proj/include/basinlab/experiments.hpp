#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "basinlab/config.hpp"

namespace basinlab {

inline constexpr const char* kToolVersion = "1.0.0";

struct EmittedFile {
  std::string name;
  std::string content;
};

// Everything one command produces. `report` is the command's main JSON
// document (also present in `files`); callers read results from it.
struct CommandResult {
  std::vector<EmittedFile> files;
  nlohmann::json report;
};

CommandResult run_sweep(const ExperimentConfig& cfg);
CommandResult run_ablation(const ExperimentConfig& cfg);
CommandResult run_cooldown(const ExperimentConfig& cfg);
CommandResult run_align(const ExperimentConfig& cfg);
CommandResult run_lambda(const ExperimentConfig& cfg);
CommandResult run_normctl(const ExperimentConfig& cfg);
CommandResult run_tausweep(const ExperimentConfig& cfg);
CommandResult run_props(const ExperimentConfig& cfg);
CommandResult run_sadiag(const ExperimentConfig& cfg);

// Dispatches on cfg.experiment.
CommandResult run_experiment(const ExperimentConfig& cfg);

// Lower-case hex SHA-256.
std::string sha256_hex(const std::string& data);

// Writes every file plus config.json and manifest.json into `dir` (created
// if missing). Returns the manifest.
nlohmann::json write_outputs(const std::string& dir, const ExperimentConfig& cfg, const CommandResult& result,
                             const std::string& started_at, const std::string& finished_at);

// UTC timestamp in ISO 8601 form.
std::string utc_now();

}  // namespace basinlab
