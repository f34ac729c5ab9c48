#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "basinlab/fields.hpp"
#include "basinlab/game.hpp"
#include "basinlab/rng.hpp"

namespace basinlab {

enum class StepRule { constant, harmonic };
enum class LambdaRule { constant, zero_after, geometric_after };
enum class CoolRule { hard_zero, geometric };

// Outer-loop step sizes and shaping weights.
//   step:   constant alpha, or c / (n + n0)
//   lambda: constant, zero for n >= handoff, or lambda * rho^(n - handoff)
struct Schedule {
  StepRule step_rule = StepRule::constant;
  double alpha = 0.2;
  double c = 1.0;
  double n0 = 10.0;
  LambdaRule lambda_rule = LambdaRule::constant;
  double lambda = 1.0;
  int handoff = -1;
  double rho_cool = 0.0;
  int total_steps = 500;

  double step_size(int n) const;
  double lambda_at(int n) const;
  void validate() const;
};

Schedule constant_schedule(double alpha, double lambda, int total_steps);

// lambda = warm_lambda before the handoff, then 0 (hard_zero) or
// warm_lambda * rho_cool^(n - handoff) (geometric, rho_cool < 1).
Schedule make_shape_then_cool(double warm_lambda, int handoff, CoolRule rule, double rho_cool = 0.0,
                              double alpha = 0.2, int total_steps = 2000);

enum class Mode { exact, sampled };
std::string to_string(Mode mode);
Mode parse_mode(const std::string& name);

struct Classification {
  bool success = false;
  double metric = 0.0;
};

// Stag Hunt: min over agents of the cooperate probability. Other games: the
// discounted frequency of joint action 0 (mutual cooperation in the IPD).
double success_metric(const GameSpec& game, const JointParams& params);
Classification classify_success(const GameSpec& game, const JointParams& params, double tau);

struct Checkpoint {
  int step = 0;
  std::vector<double> params;
  double v_norm = 0.0;
  double update_norm = 0.0;
  double metric = 0.0;
};

struct RunRecord {
  std::string label;
  Arm arm = Arm::pg;
  std::uint64_t seed = 0;
  Schedule schedule;
  JointParams init;
  JointParams final_params;
  std::vector<Checkpoint> checkpoints;
  double metric = 0.0;
  bool success = false;
  bool diverged = false;
  int divergence_step = -1;
  std::string divergence_reason;
};

struct RunOptions {
  Mode mode = Mode::exact;
  BatchSpec batch;
  double tau = 0.82;
  int max_checkpoints = 200;
};

// One outer-loop trajectory phi_{n+1} = phi_n + alpha_n * update_n. Any
// numerical failure ends the run and marks it diverged (and unsuccessful).
RunRecord run(const GameSpec& game, Arm arm, const JointParams& init, const Schedule& schedule,
              const UnrollConfig& cfg, const RunOptions& options, Stream& stream);

// Standard deviation of the checkpoint metric over the second half of a run.
double second_half_sd(const RunRecord& record);

// Uniform draw from [lo, hi]^d in probability space, mapped to logits.
JointParams draw_uniform_init(const GameSpec& game, Stream& stream, double lo = 0.05, double hi = 0.95);

struct Treatment {
  std::string label;
  Arm arm = Arm::pg;
  Schedule schedule;
};

struct InitRule {
  enum class Kind { uniform_square, fixed } kind = Kind::uniform_square;
  double lo = 0.05;
  double hi = 0.95;
  std::vector<double> probabilities;  // fixed: one action-0 probability per parameter
};

// Runs every treatment for seeds 0..n_seeds-1. Within a seed every treatment
// starts from the same initialisation and draws from the same stream, both
// derived from (master_seed, seed) only. Output is seed-major.
std::vector<RunRecord> paired_run_set(const GameSpec& game, const std::vector<Treatment>& treatments, int n_seeds,
                                      const InitRule& init, const UnrollConfig& cfg, const RunOptions& options,
                                      std::uint64_t master_seed);

// seed,arm,init_*,final_*,metric,success,diverged[,second_half_sd]
void write_runs_csv(std::ostream& os, const GameSpec& game, const std::vector<RunRecord>& runs,
                    bool with_dispersion = false);

}  // namespace basinlab
