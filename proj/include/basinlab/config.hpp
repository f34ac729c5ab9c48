#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "basinlab/analysis.hpp"
#include "basinlab/errors.hpp"
#include "basinlab/fields.hpp"
#include "basinlab/game.hpp"
#include "basinlab/learners.hpp"

namespace basinlab {

// Invalid experiment configuration; `field` is the dotted path of the
// offending entry, or "<document>" for parse errors.
class ConfigError : public ContractError {
 public:
  ConfigError(std::string field, const std::string& what)
      : ContractError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

inline const std::vector<std::string>& experiment_tags() {
  static const std::vector<std::string> tags{"sweep",  "ablate", "cooldown", "align",  "lambda",
                                             "normctl", "tausweep", "props",  "sadiag"};
  return tags;
}

struct CooldownSection {
  int handoff = 1000;
  std::string cool_rule = "hard_zero";
  double rho_cool = 0.99;
  int deep_inits = 20;
  double deep_lo = 0.85;
  double deep_hi = 0.95;
};

struct PropsSection {
  double entropy_weight = 0.05;
  std::vector<double> start_probabilities{0.99, 0.99};
  double radius = 0.5;
  int mu_samples = 500;
  int lipschitz_samples = 200;
  int drift_samples = 500;
  std::vector<double> shift_lambdas{0.05, 0.1, 0.2, 0.4};
};

struct SadiagSection {
  std::vector<std::vector<double>> points{{0.3, 0.6}, {0.5, 0.5}, {0.7, 0.4}};
  double lambda = 0.0;
  int repeats = 400;
  std::vector<int> bias_horizons{10, 20, 40};
  std::vector<int> moment_lengths{1, 2, 3};
  std::string moment_arm = "meta_mapg";
  double moment_lambda = 1.0;
  int moment_repeats = 50;
};

struct ExperimentConfig {
  std::string experiment = "sweep";
  nlohmann::json game = {{"kind", "stag_hunt"}};
  std::vector<std::string> arms{"pg", "meta_mapg"};
  double lambda = 1.0;
  Schedule schedule = constant_schedule(0.2, 1.0, 500);
  UnrollConfig unroll;
  GridSpec grid;
  int seeds_per_cell = 1;
  int seeds = 100;
  std::uint64_t master_seed = 20240601;
  Mode mode = Mode::exact;
  BatchSpec batch;
  double tau = 0.82;
  std::string output = "out";
  CooldownSection cooldown;
  PropsSection props;
  SadiagSection sadiag;
  std::vector<double> lambdas{0.0, 0.5, 1.0, 2.0, 3.0, 5.0};
  double lambda_slack = 0.02;
  int early_steps = 10;
  std::vector<double> taus{0.78, 0.80, 0.82, 0.84, 0.86};

  GameSpec make_game() const;
  std::vector<Arm> arm_list() const;
  // Schedule with lambda filled in from the top-level lambda.
  Schedule outer_schedule() const;
  RunOptions run_options() const;
};

// Built-in defaults for one experiment tag.
ExperimentConfig default_config(const std::string& experiment);

// Parses a JSON document over the defaults for its tag (or `experiment` when
// the document has none). Unknown keys and wrong types are ConfigErrors.
ExperimentConfig parse_config(const std::string& text, const std::string& experiment = "");
ExperimentConfig config_from_json(const nlohmann::json& doc, const std::string& experiment = "");
ExperimentConfig load_config(const std::string& path, const std::string& experiment = "");
nlohmann::json config_to_json(const ExperimentConfig& cfg);

}  // namespace basinlab
