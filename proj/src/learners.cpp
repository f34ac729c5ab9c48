#include "basinlab/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "basinlab/errors.hpp"
#include "basinlab/parallel.hpp"

namespace basinlab {

double Schedule::step_size(int n) const {
  if (step_rule == StepRule::constant) return alpha;
  return c / (static_cast<double>(n) + n0);
}

double Schedule::lambda_at(int n) const {
  if (lambda_rule == LambdaRule::constant || handoff < 0 || n < handoff) return lambda;
  if (lambda_rule == LambdaRule::zero_after) return 0.0;
  return lambda * std::pow(rho_cool, n - handoff);
}

void Schedule::validate() const {
  if (total_steps < 0) throw ContractError("schedule: total_steps must be non-negative");
  if (step_rule == StepRule::constant) {
    if (!std::isfinite(alpha) || alpha < 0.0) throw ContractError("schedule: alpha must be finite and non-negative");
  } else {
    if (!(c > 0.0) || !std::isfinite(c)) throw ContractError("schedule: c must be positive");
    if (!(n0 > 0.0) || !std::isfinite(n0)) throw ContractError("schedule: n0 must be positive");
  }
  if (!std::isfinite(lambda) || lambda < 0.0) throw ContractError("schedule: lambda must be finite and non-negative");
  if (lambda_rule != LambdaRule::constant && handoff < 1)
    throw ContractError("schedule: a cooldown rule needs handoff >= 1");
  if (lambda_rule == LambdaRule::geometric_after && !(rho_cool >= 0.0 && rho_cool < 1.0))
    throw ContractError("schedule: rho_cool must lie in [0, 1) so that the shaping weights are summable");
}

Schedule constant_schedule(double alpha, double lambda, int total_steps) {
  Schedule s;
  s.alpha = alpha;
  s.lambda = lambda;
  s.total_steps = total_steps;
  s.validate();
  return s;
}

Schedule make_shape_then_cool(double warm_lambda, int handoff, CoolRule rule, double rho_cool, double alpha,
                              int total_steps) {
  Schedule s;
  s.alpha = alpha;
  s.lambda = warm_lambda;
  s.handoff = handoff;
  s.total_steps = total_steps;
  s.lambda_rule = rule == CoolRule::hard_zero ? LambdaRule::zero_after : LambdaRule::geometric_after;
  s.rho_cool = rule == CoolRule::geometric ? rho_cool : 0.0;
  s.validate();
  return s;
}

std::string to_string(Mode mode) { return mode == Mode::exact ? "exact" : "sampled"; }

Mode parse_mode(const std::string& name) {
  if (name == "exact") return Mode::exact;
  if (name == "sampled") return Mode::sampled;
  throw ContractError("unknown mode '" + name + "' (expected exact or sampled)");
}

double success_metric(const GameSpec& game, const JointParams& params) {
  if (game.kind() == GameKind::stag_hunt) {
    const auto p = action0_probabilities(game, params);
    return *std::min_element(p.begin(), p.end());
  }
  return discounted_joint0_frequency(game, params);
}

Classification classify_success(const GameSpec& game, const JointParams& params, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ContractError("tau must lie in (0, 1)");
  const double m = success_metric(game, params);
  return {m >= tau, m};
}

RunRecord run(const GameSpec& game, Arm arm, const JointParams& init, const Schedule& schedule,
              const UnrollConfig& cfg, const RunOptions& options, Stream& stream) {
  schedule.validate();
  cfg.validate();
  if (options.max_checkpoints < 2) throw ContractError("run: max_checkpoints must be at least 2");
  RunRecord rec;
  rec.label = to_string(arm);
  rec.arm = arm;
  rec.schedule = schedule;
  rec.init = init;

  const int total = schedule.total_steps;
  const int stride = std::max(1, (total + options.max_checkpoints - 2) / (options.max_checkpoints - 1));
  JointParams phi = init;
  int n = 0;
  try {
    for (; n < total; ++n) {
      const double alpha = schedule.step_size(n);
      const double lambda = schedule.lambda_at(n);
      std::vector<double> update;
      double v_norm = 0.0;
      if (options.mode == Mode::exact) {
        FieldEval e = evaluate_field(game, phi, cfg, arm, lambda);
        v_norm = norm(e.v);
        update = std::move(e.assembled);
      } else {
        SampledUpdate s = sampled_update(game, phi, arm, lambda, cfg, options.batch, stream);
        v_norm = norm(s.v_part);
        update = std::move(s.g);
      }
      if (n % stride == 0)
        rec.checkpoints.push_back({n, phi.values, v_norm, norm(update), success_metric(game, phi)});
      for (std::size_t k = 0; k < update.size(); ++k) phi.values[k] += alpha * update[k];
      for (double x : phi.values)
        if (!std::isfinite(x)) throw NumericalError("outer_step", "non-finite iterate");
    }
  } catch (const NumericalError& err) {
    rec.diverged = true;
    rec.divergence_step = n;
    rec.divergence_reason = err.operation() + ": " + err.what();
  }

  rec.final_params = phi;
  if (rec.diverged) {
    rec.success = false;
    rec.metric = std::numeric_limits<double>::quiet_NaN();
    return rec;
  }
  const auto cls = classify_success(game, phi, options.tau);
  rec.metric = cls.metric;
  rec.success = cls.success;
  Checkpoint last{total, phi.values, 0.0, 0.0, cls.metric};
  if (options.mode == Mode::exact) {
    try {
      const FieldEval e = evaluate_field(game, phi, cfg, arm, schedule.lambda_at(total));
      last.v_norm = norm(e.v);
      last.update_norm = norm(e.assembled);
    } catch (const NumericalError&) {
      last.v_norm = last.update_norm = std::numeric_limits<double>::quiet_NaN();
    }
  }
  rec.checkpoints.push_back(std::move(last));
  return rec;
}

double second_half_sd(const RunRecord& record) {
  const int half = record.schedule.total_steps / 2;
  double sum = 0.0;
  double sq = 0.0;
  int count = 0;
  for (const auto& c : record.checkpoints) {
    if (c.step < half) continue;
    sum += c.metric;
    sq += c.metric * c.metric;
    ++count;
  }
  if (count == 0) return 0.0;
  const double mean = sum / count;
  return std::sqrt(std::max(0.0, sq / count - mean * mean));
}

JointParams draw_uniform_init(const GameSpec& game, Stream& stream, double lo, double hi) {
  if (!(lo > 0.0 && hi < 1.0 && lo <= hi)) throw ContractError("init range must satisfy 0 < lo <= hi < 1");
  std::vector<double> p(game.param_dim());
  for (double& x : p) x = stream.uniform(lo, hi);
  return params_from_probabilities(game, p);
}

std::vector<RunRecord> paired_run_set(const GameSpec& game, const std::vector<Treatment>& treatments, int n_seeds,
                                      const InitRule& init, const UnrollConfig& cfg, const RunOptions& options,
                                      std::uint64_t master_seed) {
  if (n_seeds < 1) throw ContractError("paired_run_set: n_seeds must be at least 1");
  if (treatments.empty()) throw ContractError("paired_run_set: no treatments");
  for (const auto& t : treatments) t.schedule.validate();
  if (init.kind == InitRule::Kind::fixed && init.probabilities.size() != game.param_dim())
    throw ContractError("paired_run_set: fixed init has the wrong dimension");

  const std::size_t nt = treatments.size();
  return parallel_map<RunRecord>(static_cast<std::size_t>(n_seeds) * nt, [&](std::size_t job) {
    const auto seed = static_cast<std::uint64_t>(job / nt);
    const Treatment& t = treatments[job % nt];
    JointParams start;
    if (init.kind == InitRule::Kind::fixed) {
      start = params_from_probabilities(game, init.probabilities);
    } else {
      Stream init_stream(master_seed, "init", {seed});
      start = draw_uniform_init(game, init_stream, init.lo, init.hi);
    }
    Stream run_stream(master_seed, "run", {seed});
    RunRecord rec = run(game, t.arm, start, t.schedule, cfg, options, run_stream);
    rec.seed = seed;
    rec.label = t.label.empty() ? to_string(t.arm) : t.label;
    return rec;
  });
}

namespace {
std::string num(double x) { return fmt::format("{:.9g}", x); }
}  // namespace

void write_runs_csv(std::ostream& os, const GameSpec& game, const std::vector<RunRecord>& runs,
                    bool with_dispersion) {
  const auto labels = game.param_labels();
  os << "seed,arm";
  for (const auto& l : labels) os << ",init_" << l;
  for (const auto& l : labels) os << ",final_" << l;
  os << ",metric,success,diverged";
  if (with_dispersion) os << ",second_half_sd";
  os << '\n';
  for (const auto& r : runs) {
    os << r.seed << ',' << r.label;
    for (double x : r.init.values) os << ',' << num(x);
    for (double x : r.final_params.values) os << ',' << num(x);
    os << ',' << num(r.metric) << ',' << (r.success ? 1 : 0) << ',' << (r.diverged ? 1 : 0);
    if (with_dispersion) os << ',' << num(second_half_sd(r));
    os << '\n';
  }
}

}  // namespace basinlab
