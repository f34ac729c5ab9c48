#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

#include "basinlab/errors.hpp"
#include "basinlab/fields.hpp"
#include "basinlab/game.hpp"
#include "basinlab/learners.hpp"

using namespace basinlab;

namespace {

GameSpec stag_hunt() { return make_stag_hunt(default_stag_hunt_payoffs(), 0.9); }
GameSpec ipd() { return make_ipd(IpdPayoffs{}, 0.96); }

JointParams step_directly(const GameSpec& g, JointParams phi, Arm arm, double lambda, double alpha, int steps,
                          const UnrollConfig& cfg) {
  for (int n = 0; n < steps; ++n) {
    const auto u = evaluate_field(g, phi, cfg, arm, lambda).assembled;
    for (std::size_t k = 0; k < u.size(); ++k) phi.values[k] += alpha * u[k];
  }
  return phi;
}

}  // namespace

TEST_CASE("step and shaping schedules") {
  Schedule s;
  s.step_rule = StepRule::harmonic;
  s.c = 2.0;
  s.n0 = 10.0;
  CHECK(s.step_size(0) == 0.2);
  CHECK(s.step_size(10) == 0.1);

  const Schedule hard = make_shape_then_cool(1.5, 4, CoolRule::hard_zero);
  CHECK(hard.lambda_at(3) == 1.5);
  CHECK(hard.lambda_at(4) == 0.0);
  CHECK(hard.lambda_at(1000) == 0.0);

  const Schedule geo = make_shape_then_cool(1.0, 5, CoolRule::geometric, 0.5);
  CHECK(geo.lambda_at(4) == 1.0);
  CHECK(geo.lambda_at(5) == 1.0);
  CHECK(geo.lambda_at(7) == 0.25);

  // Summable: sum over n of lambda_n = handoff * lambda + lambda / (1 - rho).
  const Schedule geo2 = make_shape_then_cool(0.8, 10, CoolRule::geometric, 0.9);
  double total = 0.0;
  for (int n = 0; n < 2000; ++n) total += geo2.lambda_at(n);
  CHECK(total == doctest::Approx(10 * 0.8 + 0.8 / (1 - 0.9)).epsilon(1e-9));
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(make_shape_then_cool(1.0, 5, CoolRule::geometric, 1.0), ContractError);
  CHECK_THROWS_AS(make_shape_then_cool(1.0, 5, CoolRule::geometric, 1.5), ContractError);
  CHECK_THROWS_AS(make_shape_then_cool(1.0, 0, CoolRule::hard_zero), ContractError);
  CHECK_THROWS_AS(constant_schedule(-0.1, 1.0, 10), ContractError);
  CHECK_THROWS_AS(constant_schedule(0.1, -1.0, 10), ContractError);
  CHECK_THROWS_AS(constant_schedule(0.1, 1.0, -1), ContractError);
  Schedule h;
  h.step_rule = StepRule::harmonic;
  h.n0 = 0.0;
  CHECK_THROWS_AS(h.validate(), ContractError);
  CHECK(parse_mode("sampled") == Mode::sampled);
  CHECK_THROWS_AS(parse_mode("mc"), ContractError);
}

TEST_CASE("zero step size leaves the parameters untouched") {
  const GameSpec g = ipd();
  const JointParams init = params_from_probabilities(g, std::vector<double>(10, 0.6));
  Stream stream(1, "test");
  const RunRecord r = run(g, Arm::meta_mapg, init, constant_schedule(0.0, 1.0, 25), UnrollConfig{}, RunOptions{},
                          stream);
  CHECK(r.final_params.values == init.values);
  CHECK_FALSE(r.diverged);
}

TEST_CASE("pg from deep inside the cooperative basin succeeds and matches direct iteration") {
  const GameSpec g = stag_hunt();
  const std::vector<double> p0{0.95, 0.95};
  const JointParams init = params_from_probabilities(g, p0);
  const Schedule sched = constant_schedule(0.2, 0.0, 500);
  Stream stream(1, "test");
  const RunRecord r = run(g, Arm::pg, init, sched, UnrollConfig{}, RunOptions{}, stream);
  CHECK(r.success);
  CHECK(r.metric >= 0.99);
  const JointParams direct = step_directly(g, init, Arm::pg, 0.0, 0.2, 500, UnrollConfig{});
  CHECK(r.final_params.values == direct.values);
}

TEST_CASE("success classification") {
  const GameSpec g = stag_hunt();
  const std::vector<double> a{0.9, 0.85};
  const auto ok = classify_success(g, params_from_probabilities(g, a), 0.82);
  CHECK(ok.success);
  CHECK(ok.metric == doctest::Approx(0.85).epsilon(1e-12));
  const std::vector<double> b{0.99, 0.8};
  CHECK_FALSE(classify_success(g, params_from_probabilities(g, b), 0.82).success);
  CHECK_THROWS_AS(classify_success(g, params_from_probabilities(g, a), 1.0), ContractError);
  CHECK_THROWS_AS(classify_success(g, params_from_probabilities(g, a), 0.0), ContractError);
}

TEST_CASE("ipd success metric matches a geometric-stopping rollout") {
  const GameSpec g = ipd();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> probs(10);
  for (double& p : probs) p = u(rng);
  const JointParams params = params_from_probabilities(g, probs);
  const double exact = success_metric(g, params);

  // (1 - gamma) sum_t gamma^t Pr(a_t = CC) = Pr(a_T = CC) with
  // Pr(T = t) = (1 - gamma) gamma^t.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int episodes = 100000;
  int hits = 0;
  for (int e = 0; e < episodes; ++e) {
    int state = 0;
    for (;;) {
      const int a1 = unit(rng) < probs[static_cast<std::size_t>(state)] ? 0 : 1;
      const int a2 = unit(rng) < probs[5 + static_cast<std::size_t>(state)] ? 0 : 1;
      const int joint = 2 * a1 + a2;
      if (unit(rng) >= g.discount()) {
        hits += joint == 0 ? 1 : 0;
        break;
      }
      state = 1 + joint;
    }
  }
  CHECK(std::abs(static_cast<double>(hits) / episodes - exact) <= 0.01);
}

TEST_CASE("hard-zero handoff at step one is a meta step followed by pg") {
  const GameSpec g = stag_hunt();
  const std::vector<double> p0{0.4, 0.55};
  const JointParams init = params_from_probabilities(g, p0);
  const UnrollConfig cfg;
  const double alpha = 0.2;
  const int total = 60;
  Stream s1(1, "test");
  const RunRecord cool = run(g, Arm::meta_mapg, init, make_shape_then_cool(1.0, 1, CoolRule::hard_zero, 0.0, alpha, total),
                             cfg, RunOptions{}, s1);
  const JointParams after_meta = step_directly(g, init, Arm::meta_mapg, 1.0, alpha, 1, cfg);
  const JointParams expected = step_directly(g, after_meta, Arm::pg, 0.0, alpha, total - 1, cfg);
  CHECK(cool.final_params.values == expected.values);
}

TEST_CASE("meta arm with zero shaping reproduces pg exactly") {
  const GameSpec g = ipd();
  const JointParams init = params_from_probabilities(g, std::vector<double>(10, 0.45));
  Stream s1(1, "a");
  Stream s2(1, "b");
  const auto pg = run(g, Arm::pg, init, constant_schedule(0.2, 0.0, 40), UnrollConfig{}, RunOptions{}, s1);
  const auto meta = run(g, Arm::meta_mapg, init, constant_schedule(0.2, 0.0, 40), UnrollConfig{}, RunOptions{}, s2);
  CHECK(pg.final_params.values == meta.final_params.values);
  CHECK(pg.metric == meta.metric);
}

TEST_CASE("paired runs share initialisation and are deterministic") {
  const GameSpec g = stag_hunt();
  const std::vector<Treatment> ts{{"pg", Arm::pg, constant_schedule(0.2, 0.0, 80)},
                                  {"meta0", Arm::meta_mapg, constant_schedule(0.2, 0.0, 80)},
                                  {"meta1", Arm::meta_mapg, constant_schedule(0.2, 1.0, 80)}};
  const auto a = paired_run_set(g, ts, 6, InitRule{}, UnrollConfig{}, RunOptions{}, 99);
  REQUIRE(a.size() == 18);
  for (std::size_t seed = 0; seed < 6; ++seed) {
    const auto& r0 = a[3 * seed];
    const auto& r1 = a[3 * seed + 1];
    const auto& r2 = a[3 * seed + 2];
    CHECK(r0.seed == seed);
    CHECK(r0.label == "pg");
    CHECK(r2.label == "meta1");
    CHECK(r0.init.values == r1.init.values);
    CHECK(r0.init.values == r2.init.values);
    CHECK(r0.final_params.values == r1.final_params.values);
    CHECK(r0.success == r1.success);
  }
  CHECK(a[0].init.values != a[3].init.values);

  setenv("BASINLAB_THREADS", "3", 1);
  const auto b = paired_run_set(g, ts, 6, InitRule{}, UnrollConfig{}, RunOptions{}, 99);
  setenv("BASINLAB_THREADS", "1", 1);
  const auto c = paired_run_set(g, ts, 6, InitRule{}, UnrollConfig{}, RunOptions{}, 99);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].final_params.values == b[k].final_params.values);
    CHECK(a[k].final_params.values == c[k].final_params.values);
  }
  const auto d = paired_run_set(g, ts, 6, InitRule{}, UnrollConfig{}, RunOptions{}, 100);
  CHECK(a[0].init.values != d[0].init.values);
}

TEST_CASE("fixed initialisation rule") {
  const GameSpec g = ipd();
  InitRule rule;
  rule.kind = InitRule::Kind::fixed;
  rule.probabilities.assign(10, 0.3);
  const std::vector<Treatment> ts{{"pg", Arm::pg, constant_schedule(0.2, 0.0, 5)}};
  const auto runs = paired_run_set(g, ts, 2, rule, UnrollConfig{}, RunOptions{}, 1);
  CHECK(runs[0].init.values == runs[1].init.values);
  rule.probabilities.assign(3, 0.3);
  CHECK_THROWS_AS(paired_run_set(g, ts, 2, rule, UnrollConfig{}, RunOptions{}, 1), ContractError);
}

TEST_CASE("checkpoints are thinned and the outcome is re-derivable") {
  const GameSpec g = stag_hunt();
  const std::vector<double> p0{0.7, 0.6};
  Stream stream(1, "test");
  RunOptions opts;
  const RunRecord r =
      run(g, Arm::meta_mapg, params_from_probabilities(g, p0), constant_schedule(0.2, 1.0, 1000), UnrollConfig{},
          opts, stream);
  CHECK(r.checkpoints.size() <= 200);
  CHECK(r.checkpoints.size() >= 100);
  CHECK(r.checkpoints.front().step == 0);
  CHECK(r.checkpoints.back().step == 1000);
  CHECK(r.checkpoints.back().params == r.final_params.values);
  CHECK(r.checkpoints.back().metric == r.metric);
  CHECK(classify_success(g, r.final_params, opts.tau).success == r.success);
  for (std::size_t k = 1; k < r.checkpoints.size(); ++k) CHECK(r.checkpoints[k].step > r.checkpoints[k - 1].step);
}

TEST_CASE("numerical failure marks a run diverged") {
  const GameSpec g = make_stag_hunt(default_stag_hunt_payoffs(), 0.999);
  Stream stream(1, "test");
  const RunRecord r =
      run(g, Arm::pg, make_params(g, {0.0, 0.0}), constant_schedule(1e307, 0.0, 5), UnrollConfig{}, RunOptions{},
          stream);
  CHECK(r.diverged);
  CHECK_FALSE(r.success);
  CHECK(std::isnan(r.metric));
  CHECK(r.divergence_step == 0);
  CHECK(r.divergence_reason.rfind("outer_step", 0) == 0);
}

TEST_CASE("sampled runs are reproducible from the stream identity") {
  const GameSpec g = stag_hunt();
  const std::vector<double> p0{0.5, 0.5};
  RunOptions opts;
  opts.mode = Mode::sampled;
  opts.batch = BatchSpec{16, 20, false};
  Stream s1(7, "run", {3});
  Stream s2(7, "run", {3});
  Stream s3(7, "run", {4});
  const auto sched = constant_schedule(0.2, 1.0, 10);
  const auto a = run(g, Arm::meta_mapg, params_from_probabilities(g, p0), sched, UnrollConfig{}, opts, s1);
  const auto b = run(g, Arm::meta_mapg, params_from_probabilities(g, p0), sched, UnrollConfig{}, opts, s2);
  const auto c = run(g, Arm::meta_mapg, params_from_probabilities(g, p0), sched, UnrollConfig{}, opts, s3);
  CHECK(a.final_params.values == b.final_params.values);
  CHECK(a.final_params.values != c.final_params.values);
}

TEST_CASE("second-half dispersion") {
  RunRecord r;
  r.schedule.total_steps = 10;
  for (int s = 0; s <= 10; s += 2) r.checkpoints.push_back({s, {}, 0.0, 0.0, s < 5 ? 100.0 : (s % 4 == 0 ? 1.0 : 3.0)});
  // Steps 6, 8, 10 carry metrics 3, 1, 3.
  CHECK(second_half_sd(r) == doctest::Approx(std::sqrt(8.0 / 9.0)).epsilon(1e-12));
}

TEST_CASE("uniform initialisation stays in range") {
  const GameSpec g = ipd();
  Stream stream(3, "init");
  for (int k = 0; k < 50; ++k) {
    const auto p = action0_probabilities(g, draw_uniform_init(g, stream, 0.2, 0.3));
    for (double x : p) {
      CHECK(x >= 0.2 - 1e-12);
      CHECK(x <= 0.3 + 1e-12);
    }
  }
  CHECK_THROWS_AS(draw_uniform_init(g, stream, 0.0, 0.5), ContractError);
}

TEST_CASE("runs csv layout") {
  const GameSpec g = stag_hunt();
  const std::vector<Treatment> ts{{"pg", Arm::pg, constant_schedule(0.2, 0.0, 3)}};
  const auto runs = paired_run_set(g, ts, 2, InitRule{}, UnrollConfig{}, RunOptions{}, 5);
  std::ostringstream os;
  write_runs_csv(os, g, runs, true);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "seed,arm,init_agent0.s0,init_agent1.s0,final_agent0.s0,final_agent1.s0,metric,success,diverged,"
        "second_half_sd");
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(line.rfind(std::to_string(rows - 1) + ",pg,", 0) == 0);
  }
  CHECK(rows == 2);
}
