#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "basinlab/analysis.hpp"
#include "basinlab/experiments.hpp"
#include "basinlab/parallel.hpp"
#include "basinlab/stability.hpp"

namespace basinlab {

namespace {

using nlohmann::json;

std::string num(double x) { return fmt::format("{:.9g}", x); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Non-finite doubles are not representable in JSON; they become null.
json jnum(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json jvec(const std::vector<double>& xs) {
  json out = json::array();
  for (double x : xs) out.push_back(jnum(x));
  return out;
}

json wilson_json(const WilsonInterval& w) {
  return {{"successes", w.k}, {"trials", w.n}, {"rate", w.n ? jnum(double(w.k) / w.n) : json(nullptr)},
          {"wilson_lo", w.lo}, {"wilson_hi", w.hi}};
}

std::vector<Treatment> treatments(const ExperimentConfig& cfg) {
  std::vector<Treatment> out;
  const Schedule s = cfg.outer_schedule();
  for (Arm arm : cfg.arm_list()) out.push_back({to_string(arm), arm, s});
  return out;
}

void require_two_params(const GameSpec& game, const std::string& what) {
  if (game.param_dim() != 2)
    throw ConfigError("game", what + " needs a two-parameter game (one per agent), got " +
                                  std::to_string(game.param_dim()) + " parameters");
}

void require_arms(const ExperimentConfig& cfg, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (std::find(cfg.arms.begin(), cfg.arms.end(), n) == cfg.arms.end())
      throw ConfigError("arms", std::string("this experiment needs arm '") + n + "'");
}

json grid_axes(const GridSpec& g) {
  std::vector<double> a1, a2;
  for (int i = 0; i < g.n1; ++i) a1.push_back(g.p1(i));
  for (int j = 0; j < g.n2; ++j) a2.push_back(g.p2(j));
  return {{"p1", a1}, {"p2", a2}, {"n1", g.n1}, {"n2", g.n2}, {"lo", g.lo}, {"hi", g.hi}};
}

std::string contour_csv(const BasinGrid& grid) {
  std::ostringstream os;
  os << "arm,line,point,p1,p2,closed\n";
  for (const auto& arm : grid.arms) {
    const Contour c = separatrix(grid, arm);
    for (std::size_t l = 0; l < c.lines.size(); ++l)
      for (std::size_t k = 0; k < c.lines[l].points.size(); ++k)
        os << arm << ',' << l << ',' << k << ',' << num(c.lines[l].points[k].first) << ','
           << num(c.lines[l].points[k].second) << ',' << (c.lines[l].closed ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string runs_csv(const GameSpec& game, const std::vector<RunRecord>& runs, bool dispersion) {
  std::ostringstream os;
  write_runs_csv(os, game, runs, dispersion);
  return os.str();
}

// k/n per treatment label, in treatment order, from a seed-major run set.
std::vector<WilsonInterval> tally(const std::vector<RunRecord>& runs, std::size_t n_treatments,
                                  std::vector<int>* diverged = nullptr) {
  std::vector<int> k(n_treatments, 0), n(n_treatments, 0), d(n_treatments, 0);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const std::size_t t = r % n_treatments;
    ++n[t];
    k[t] += runs[r].success ? 1 : 0;
    d[t] += runs[r].diverged ? 1 : 0;
  }
  std::vector<WilsonInterval> out;
  for (std::size_t t = 0; t < n_treatments; ++t) out.push_back(wilson(k[t], n[t]));
  if (diverged) *diverged = d;
  return out;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

CommandResult run_sweep(const ExperimentConfig& cfg) {
  const GameSpec game = cfg.make_game();
  require_two_params(game, "sweep");
  const BasinGrid grid = grid_sweep(game, treatments(cfg), cfg.grid, cfg.seeds_per_cell, cfg.unroll,
                                    cfg.run_options(), cfg.master_seed);

  json gj;
  gj["game"] = to_string(game.kind());
  gj["axes"] = grid_axes(cfg.grid);
  gj["arms"] = grid.arms;
  gj["seeds_per_cell"] = grid.seeds_per_cell;
  gj["successes"] = grid.successes;
  gj["diverged"] = grid.diverged;

  std::ostringstream cells;
  cells << "arm,i,j,p1,p2,successes,trials,rate,diverged,mean_metric\n";
  for (std::size_t a = 0; a < grid.arms.size(); ++a)
    for (int i = 0; i < cfg.grid.n1; ++i)
      for (int j = 0; j < cfg.grid.n2; ++j) {
        const std::size_t c = cfg.grid.cell(i, j);
        cells << grid.arms[a] << ',' << i << ',' << j << ',' << num(cfg.grid.p1(i)) << ',' << num(cfg.grid.p2(j))
              << ',' << grid.successes[a][c] << ',' << grid.seeds_per_cell << ',' << num(grid.rate(a, c)) << ','
              << grid.diverged[a][c] << ',' << num(grid.mean_metric[a][c]) << '\n';
      }

  json summary;
  summary["experiment"] = "sweep";
  summary["game"] = to_string(game.kind());
  summary["cells"] = cfg.grid.cells();
  summary["seeds_per_cell"] = cfg.seeds_per_cell;
  summary["tau"] = cfg.tau;
  summary["lambda"] = cfg.lambda;
  json cov = json::object();
  for (const auto& arm : grid.arms) cov[arm] = coverage(grid, arm);
  summary["coverage"] = cov;
  const bool paired = std::count(grid.arms.begin(), grid.arms.end(), "pg") &&
                      std::count(grid.arms.begin(), grid.arms.end(), "meta_mapg");
  if (paired) {
    const CellMasks m = masks(grid);
    summary["gap_meta_minus_pg"] = coverage(grid, "meta_mapg") - coverage(grid, "pg");
    summary["gained_cells"] = m.gained_count();
    summary["lost_cells"] = m.lost_count();
  } else {
    summary["gap_meta_minus_pg"] = nullptr;
    summary["gained_cells"] = nullptr;
    summary["lost_cells"] = nullptr;
  }
  json sep = json::object();
  for (const auto& arm : grid.arms) {
    const Contour c = separatrix(grid, arm);
    sep[arm] = {{"lines", c.lines.size()}, {"all_success", c.all_success}, {"all_fail", c.all_fail}};
  }
  summary["separatrix"] = sep;
  summary["reference_contour"] = std::count(grid.arms.begin(), grid.arms.end(), "pg") ? json("pg") : json(nullptr);

  CommandResult out;
  out.files = {{"grid.json", dump(gj)}, {"cells.csv", cells.str()}, {"separatrix.csv", contour_csv(grid)},
               {"summary.json", dump(summary)}};
  out.report = summary;
  return out;
}

CommandResult run_ablation(const ExperimentConfig& cfg) {
  const GameSpec game = cfg.make_game();
  const auto ts = treatments(cfg);
  const auto runs = paired_run_set(game, ts, cfg.seeds, InitRule{}, cfg.unroll, cfg.run_options(), cfg.master_seed);
  std::vector<int> div;
  const auto w = tally(runs, ts.size(), &div);

  std::ostringstream csv;
  csv << "arm,successes,trials,rate,wilson_lo,wilson_hi,diverged\n";
  json report;
  report["experiment"] = "ablate";
  report["game"] = to_string(game.kind());
  report["seeds"] = cfg.seeds;
  report["lambda"] = cfg.lambda;
  report["tau"] = cfg.tau;
  json arms = json::object();
  for (std::size_t t = 0; t < ts.size(); ++t) {
    csv << ts[t].label << ',' << w[t].k << ',' << w[t].n << ',' << num(double(w[t].k) / w[t].n) << ','
        << num(w[t].lo) << ',' << num(w[t].hi) << ',' << div[t] << '\n';
    json a = wilson_json(w[t]);
    a["diverged"] = div[t];
    arms[ts[t].label] = a;
  }
  report["arms"] = arms;
  const auto idx = [&](const char* name) -> int {
    for (std::size_t t = 0; t < ts.size(); ++t)
      if (ts[t].label == name) return static_cast<int>(t);
    return -1;
  };
  const int ip = idx("peer_only");
  const int im = idx("meta_mapg");
  report["peer_meta_overlap"] = (ip >= 0 && im >= 0) ? json(overlap(w[ip], w[im])) : json(nullptr);

  CommandResult out;
  out.files = {{"ablation.csv", csv.str()}, {"ablation.json", dump(report)},
               {"runs.csv", runs_csv(game, runs, false)}};
  out.report = report;
  return out;
}

CommandResult run_cooldown(const ExperimentConfig& cfg) {
  const GameSpec game = cfg.make_game();
  const Schedule base = cfg.outer_schedule();
  const auto& cd = cfg.cooldown;
  const CoolRule rule = cd.cool_rule == "hard_zero" ? CoolRule::hard_zero : CoolRule::geometric;
  Schedule cool = make_shape_then_cool(cfg.lambda, cd.handoff, rule, rule == CoolRule::geometric ? cd.rho_cool : 0.0,
                                       base.alpha, base.total_steps);
  cool.step_rule = base.step_rule;
  cool.c = base.c;
  cool.n0 = base.n0;
  const std::vector<Treatment> ts{{"pg", Arm::pg, base},
                                  {"constant", Arm::meta_mapg, base},
                                  {"shape_then_cool", Arm::meta_mapg, cool}};
  RunOptions options = cfg.run_options();
  const auto runs = paired_run_set(game, ts, cfg.seeds, InitRule{}, cfg.unroll, options, cfg.master_seed);
  std::vector<int> div;
  const auto w = tally(runs, ts.size(), &div);

  std::vector<double> sd_mean(ts.size(), 0.0), sd_max(ts.size(), 0.0);
  std::vector<int> sd_count(ts.size(), 0);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const std::size_t t = r % ts.size();
    if (runs[r].diverged) continue;
    const double sd = second_half_sd(runs[r]);
    sd_mean[t] += sd;
    sd_max[t] = std::max(sd_max[t], sd);
    ++sd_count[t];
  }

  std::ostringstream csv;
  csv << "schedule,arm,lambda,handoff,successes,trials,rate,wilson_lo,wilson_hi,diverged,mean_second_half_sd,"
         "max_second_half_sd\n";
  json report;
  report["experiment"] = "cooldown";
  report["game"] = to_string(game.kind());
  report["seeds"] = cfg.seeds;
  report["total_steps"] = base.total_steps;
  report["handoff"] = cd.handoff;
  report["cool_rule"] = cd.cool_rule;
  json rows = json::object();
  for (std::size_t t = 0; t < ts.size(); ++t) {
    const double mean_sd = sd_count[t] ? sd_mean[t] / sd_count[t] : std::nan("");
    const double lam = ts[t].arm == Arm::pg ? 0.0 : cfg.lambda;
    const int handoff = ts[t].label == "shape_then_cool" ? cd.handoff : -1;
    csv << ts[t].label << ',' << to_string(ts[t].arm) << ',' << num(lam) << ',' << handoff << ',' << w[t].k << ','
        << w[t].n << ',' << num(double(w[t].k) / w[t].n) << ',' << num(w[t].lo) << ',' << num(w[t].hi) << ','
        << div[t] << ',' << num(mean_sd) << ',' << num(sd_max[t]) << '\n';
    json row = wilson_json(w[t]);
    row["arm"] = to_string(ts[t].arm);
    row["diverged"] = div[t];
    row["mean_second_half_sd"] = jnum(mean_sd);
    row["max_second_half_sd"] = sd_max[t];
    rows[ts[t].label] = row;
  }
  report["schedules"] = rows;
  const double cool_rate = double(w[2].k) / w[2].n;
  report["cool_within_constant_interval"] = cool_rate >= w[1].lo && cool_rate <= w[1].hi;

  CommandResult out;
  out.files = {{"cooldown.csv", csv.str()}, {"cooldown.json", dump(report)},
               {"runs.csv", runs_csv(game, runs, true)}};
  out.report = report;
  return out;
}

CommandResult run_align(const ExperimentConfig& cfg) {
  const GameSpec game = cfg.make_game();
  require_two_params(game, "align");
  require_arms(cfg, {"pg", "meta_mapg"});
  const Schedule s = cfg.outer_schedule();
  const BasinGrid grid = grid_sweep(game, {{"pg", Arm::pg, s}, {"meta_mapg", Arm::meta_mapg, s}}, cfg.grid,
                                    cfg.seeds_per_cell, cfg.unroll, cfg.run_options(), cfg.master_seed);
  const CellMasks m = masks(grid);
  const AlignmentReport rep = alignment_stats(game, cfg.grid, cfg.unroll, cfg.lambda, &m);

  std::ostringstream csv;
  csv << "i,j,p1,p2,dp1,dp2,cosine,excluded,gained\n";
  for (const auto& c : rep.cells)
    csv << c.i << ',' << c.j << ',' << num(c.p1) << ',' << num(c.p2) << ',' << num(c.dp1) << ',' << num(c.dp2)
        << ',' << (c.excluded ? std::string() : num(c.cosine)) << ',' << (c.excluded ? 1 : 0) << ','
        << (c.gained ? 1 : 0) << '\n';

  const auto summary = [](const CosineSummary& s) {
    return json{{"count", s.count}, {"excluded", s.excluded}, {"mean", jnum(s.mean)},
                {"median", jnum(s.median)}, {"min", jnum(s.min)}, {"max", jnum(s.max)}};
  };
  json report;
  report["experiment"] = "align";
  report["game"] = to_string(game.kind());
  report["lambda"] = cfg.lambda;
  report["gained_cells"] = m.gained_count();
  report["lost_cells"] = m.lost_count();
  report["all"] = summary(rep.all);
  report["gained"] = summary(rep.gained);

  CommandResult out;
  out.files = {{"align.csv", csv.str()}, {"align_summary.json", dump(report)}};
  out.report = report;
  return out;
}

CommandResult run_lambda(const ExperimentConfig& cfg) {
  const GameSpec game = cfg.make_game();
  require_two_params(game, "lambda");
  const LambdaSweep sw = lambda_sweep(game, cfg.lambdas, cfg.grid, cfg.seeds_per_cell, cfg.schedule, cfg.unroll,
                                      cfg.run_options(), cfg.master_seed, cfg.lambda_slack);
  std::ostringstream csv;
  csv << "lambda,coverage\n";
  for (std::size_t k = 0; k < sw.lambdas.size(); ++k) csv << num(sw.lambdas[k]) << ',' << num(sw.coverage[k]) << '\n';
  json report;
  report["experiment"] = "lambda";
  report["game"] = to_string(game.kind());
  report["lambdas"] = sw.lambdas;
  report["coverage"] = sw.coverage;
  report["slack"] = sw.slack;
  report["monotone"] = sw.monotone;
  report["gain"] = sw.gain;

  CommandResult out;
  out.files = {{"lambda.csv", csv.str()}, {"lambda.json", dump(report)}};
  out.report = report;
  return out;
}

CommandResult run_normctl(const ExperimentConfig& cfg) {
  const GameSpec game = cfg.make_game();
  require_two_params(game, "normctl");
  const NormMatchedReport r = norm_matched_control(game, cfg.grid, cfg.seeds_per_cell, cfg.outer_schedule(),
                                                   cfg.unroll, cfg.run_options(), cfg.master_seed, cfg.early_steps);
  json report;
  report["experiment"] = "normctl";
  report["game"] = to_string(game.kind());
  report["lambda"] = cfg.lambda;
  report["early_steps"] = r.early_steps;
  report["meta_norm"] = r.meta_norm;
  report["pg_norm"] = r.pg_norm;
  report["ratio"] = r.ratio;
  report["base_step"] = r.base_alpha;
  report["matched_step"] = r.matched_alpha;
  report["coverage_pg"] = r.coverage_pg;
  report["coverage_meta"] = r.coverage_meta;
  report["coverage_matched_pg"] = r.coverage_matched_pg;
  report["gap_meta_minus_matched"] = r.coverage_meta - r.coverage_matched_pg;

  CommandResult out;
  out.files = {{"normctl.json", dump(report)}};
  out.report = report;
  return out;
}

CommandResult run_tausweep(const ExperimentConfig& cfg) {
  const GameSpec game = cfg.make_game();
  const auto ts = treatments(cfg);
  const auto runs = paired_run_set(game, ts, cfg.seeds, InitRule{}, cfg.unroll, cfg.run_options(), cfg.master_seed);
  const auto rows = threshold_sweep(runs, cfg.taus);

  std::ostringstream csv;
  csv << "tau,arm,successes,trials,rate,wilson_lo,wilson_hi\n";
  json report;
  report["experiment"] = "tausweep";
  report["game"] = to_string(game.kind());
  report["seeds"] = cfg.seeds;
  json jrows = json::array();
  for (const auto& row : rows) {
    json arms = json::object();
    for (std::size_t a = 0; a < row.labels.size(); ++a) {
      const WilsonInterval w = wilson(row.successes[a], row.trials[a]);
      csv << num(row.tau) << ',' << row.labels[a] << ',' << w.k << ',' << w.n << ','
          << num(double(w.k) / w.n) << ',' << num(w.lo) << ',' << num(w.hi) << '\n';
      arms[row.labels[a]] = wilson_json(w);
    }
    jrows.push_back({{"tau", row.tau}, {"arms", arms}, {"gap", jnum(row.gap)}});
  }
  report["rows"] = jrows;

  CommandResult out;
  out.files = {{"tausweep.csv", csv.str()}, {"tausweep.json", dump(report)},
               {"runs.csv", runs_csv(game, runs, false)}};
  out.report = report;
  return out;
}

namespace {

json shift_json(const ShiftReport& r) {
  json pts = json::array();
  for (const auto& p : r.points)
    pts.push_back({{"lambda", p.lambda}, {"zero", jvec(p.zero)}, {"shift", jnum(p.shift)},
                   {"converged", p.converged}, {"iterations", p.iterations}, {"residual", jnum(p.residual)}});
  return {{"points", pts}, {"slope", jnum(r.slope)}, {"relative_residual", jnum(r.relative_residual)},
          {"implicit_derivative", jvec(r.implicit_derivative)}, {"all_converged", r.all_converged}};
}

json drift_json(const DriftReport& d) {
  return {{"samples", d.samples}, {"violations", d.violations}, {"worst_margin", jnum(d.worst_margin)},
          {"radius", d.radius}, {"rate", d.rate}};
}

// Runs the synthetic affine field F(x, l) = -A (x - c) + l m, whose zero
// moves by exactly l A^-1 m.
json synthetic_case(std::uint64_t master) {
  const std::vector<std::vector<double>> a{{2.0, 0.5}, {-0.3, 1.5}};
  const std::vector<double> m{0.7, -0.4};
  const std::vector<double> c{0.2, -0.1};
  const FieldFamily f = [&](const std::vector<double>& x, double l) {
    std::vector<double> out(2);
    for (int i = 0; i < 2; ++i) out[i] = -(a[i][0] * (x[0] - c[0]) + a[i][1] * (x[1] - c[1])) + l * m[i];
    return out;
  };
  const JacobianFamily jac = [&](const std::vector<double>&, double) {
    ad::JacobianMatrix j(2, 2);
    for (int r = 0; r < 2; ++r)
      for (int k = 0; k < 2; ++k) j(r, k) = -a[r][k];
    return j;
  };
  const std::vector<double> lambdas{0.25, 0.5, 1.0, 2.0};
  const ShiftReport r = verify_fixed_point_shift(f, jac, c, lambdas);

  const double det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
  const std::vector<double> ainv_m{(a[1][1] * m[0] - a[0][1] * m[1]) / det, (-a[1][0] * m[0] + a[0][0] * m[1]) / det};
  double max_err = 0.0;
  for (const auto& p : r.points)
    for (int i = 0; i < 2; ++i) max_err = std::max(max_err, std::abs(p.displacement[i] - p.lambda * ainv_m[i]));

  const double mu = symmetric_margin(jac(c, 0.0));
  Stream stream(master, "props-synthetic-drift");
  const double l = 1.0;
  const std::vector<double> centre{c[0] + l * ainv_m[0], c[1] + l * ainv_m[1]};
  const DriftReport d = verify_drift([&](const std::vector<double>& x) { return f(x, l); }, centre, mu, 0.0, l, 1.0,
                                     500, stream);
  return {{"shift", shift_json(r)}, {"max_shift_error", max_err}, {"mu", mu}, {"drift", drift_json(d)}};
}

}  // namespace

CommandResult run_props(const ExperimentConfig& cfg) {
  const auto& pc = cfg.props;
  const GameSpec game = cfg.make_game().with_entropy_weight(pc.entropy_weight);
  if (pc.start_probabilities.size() != game.param_dim())
    throw ConfigError("props.start_probabilities", "needs one probability per parameter (" +
                                                       std::to_string(game.param_dim()) + ")");
  const UnrollConfig& un = cfg.unroll;

  const VectorField v = [&](const std::vector<double>& x) { return eval_v(game, make_params(game, x)); };
  const JacobianField dv = [&](const std::vector<double>& x) { return v_jacobian(game, make_params(game, x)); };
  const JointParams start = params_from_probabilities(game, pc.start_probabilities);
  const NewtonResult nr = damped_newton(v, dv, start.values);
  if (!nr.converged) throw NumericalError("props: equilibrium search", "Newton did not converge on v");
  const JointParams eq = make_params(game, nr.x);

  json report;
  report["experiment"] = "props";
  report["game"] = to_string(game.kind());
  report["entropy_weight"] = pc.entropy_weight;
  report["equilibrium"] = {{"theta", nr.x},
                           {"probabilities", action0_probabilities(game, eq)},
                           {"residual", nr.residual},
                           {"iterations", nr.iterations}};

  Stream mu_stream(cfg.master_seed, "props-mu");
  const MuEstimate mu = estimate_mu(game, eq, pc.radius, pc.mu_samples, mu_stream);
  const double mu_peer = estimate_mu_M(game, eq, un, CorrectionPart::peer);
  const double mu_full = estimate_mu_M(game, eq, un, CorrectionPart::full);
  report["mu"] = {{"value", mu.mu}, {"samples", mu.samples}, {"violations", mu.violations}, {"radius", pc.radius},
                  {"jacobian_margin", symmetric_margin(dv(nr.x))}};
  report["mu_M"] = {{"peer", mu_peer}, {"full", mu_full}};

  report["shift"] = {{"meta_mapg", shift_json(verify_fixed_point_shift(game, eq, un, Arm::meta_mapg, pc.shift_lambdas))},
                     {"peer_only", shift_json(verify_fixed_point_shift(game, eq, un, Arm::peer_only, pc.shift_lambdas))}};

  // Certified radii and the drift inequality at half the shaped radius.
  const double lam = cfg.lambda;
  Stream lip_stream(cfg.master_seed, "props-lipschitz");
  const double l0 = local_lipschitz(dv, nr.x, pc.radius, pc.lipschitz_samples, lip_stream);
  const JacobianField dfl = [&](const std::vector<double>& x) {
    return assembled_jacobian(game, make_params(game, x), un, Arm::meta_mapg, lam);
  };
  const VectorField fl = [&](const std::vector<double>& x) {
    return evaluate_field(game, make_params(game, x), un, Arm::meta_mapg, lam).assembled;
  };
  const NewtonResult shifted = damped_newton(fl, dfl, nr.x);
  if (!shifted.converged) throw NumericalError("props: shifted zero", "Newton did not converge on the shaped field");
  Stream lip_stream_l(cfg.master_seed, "props-lipschitz-shaped");
  const double ll = local_lipschitz(dfl, shifted.x, pc.radius, pc.lipschitz_samples, lip_stream_l);
  const double rate = mu.mu + lam * mu_full;
  const double rho0 = mu.mu > 0.0 ? mu.mu / (2.0 * l0) : 0.0;
  const double rhol = rate > 0.0 ? rate / (2.0 * ll) : 0.0;
  json radius = {{"lambda", lam},   {"lipschitz_pg", l0}, {"lipschitz_shaped", ll},
                 {"rho_pg", rho0}, {"rho_shaped", rhol}, {"shaped_larger", rhol > rho0}};
  report["radius"] = radius;
  json drift = {{"lambda", lam}, {"centre", shifted.x}, {"mu_M_positive", mu_full > 0.0}};
  if (rhol > 0.0) {
    Stream ds(cfg.master_seed, "props-drift");
    drift["report"] = drift_json(verify_drift(fl, shifted.x, mu.mu, mu_full, lam, 0.5 * rhol, pc.drift_samples, ds));
    drift["skipped"] = false;
  } else {
    drift["report"] = nullptr;
    drift["skipped"] = true;
  }
  report["drift"] = drift;
  report["synthetic"] = synthetic_case(cfg.master_seed);

  // Cooldown convergence from deep-basin initialisations.
  const auto& cd = cfg.cooldown;
  const Schedule base = cfg.outer_schedule();
  Schedule half = base;
  half.lambda = 0.5 * lam;
  Schedule cool = make_shape_then_cool(lam, cd.handoff, cd.cool_rule == "hard_zero" ? CoolRule::hard_zero : CoolRule::geometric,
                                       cd.cool_rule == "hard_zero" ? 0.0 : cd.rho_cool, base.alpha, base.total_steps);
  cool.step_rule = base.step_rule;
  cool.c = base.c;
  cool.n0 = base.n0;
  RunOptions options = cfg.run_options();
  options.mode = Mode::exact;
  const std::size_t dim = game.param_dim();
  struct Row {
    std::vector<double> init, pg;
    double d_cool = 0.0, d_full = 0.0, d_half = 0.0;
  };
  const auto rows = parallel_map<Row>(static_cast<std::size_t>(cd.deep_inits), [&](std::size_t i) {
    Stream init_stream(cfg.master_seed, "deep-init", {i});
    std::vector<double> p(dim);
    for (auto& x : p) x = init_stream.uniform(cd.deep_lo, cd.deep_hi);
    const JointParams init = params_from_probabilities(game, p);
    const auto final_probs = [&](Arm arm, const Schedule& s) {
      Stream st(cfg.master_seed, "deep-run", {i});
      const RunRecord r = run(game, arm, init, s, un, options, st);
      if (r.diverged) throw NumericalError("props: cooldown convergence run", r.divergence_reason);
      return action0_probabilities(game, r.final_params);
    };
    Row row;
    row.init = p;
    row.pg = final_probs(Arm::pg, base);
    row.d_cool = distance(final_probs(Arm::meta_mapg, cool), row.pg);
    row.d_full = distance(final_probs(Arm::meta_mapg, base), row.pg);
    row.d_half = distance(final_probs(Arm::meta_mapg, half), row.pg);
    return row;
  });
  std::ostringstream ccsv;
  ccsv << "init";
  for (std::size_t k = 0; k < dim; ++k) ccsv << ",init_p" << k;
  ccsv << ",d_cool,d_lambda,d_half_lambda\n";
  double max_cool = 0.0, sum_full = 0.0, sum_half = 0.0;
  json jrows = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    ccsv << i;
    for (double x : r.init) ccsv << ',' << num(x);
    ccsv << ',' << num(r.d_cool) << ',' << num(r.d_full) << ',' << num(r.d_half) << '\n';
    max_cool = std::max(max_cool, r.d_cool);
    sum_full += r.d_full;
    sum_half += r.d_half;
    jrows.push_back({{"init", r.init}, {"pg_final", r.pg}, {"d_cool", r.d_cool}, {"d_lambda", r.d_full},
                     {"d_half_lambda", r.d_half}});
  }
  const double n = static_cast<double>(rows.size());
  report["cooldown_convergence"] = {{"lambda", lam},
                                    {"handoff", cd.handoff},
                                    {"cool_rule", cd.cool_rule},
                                    {"total_steps", base.total_steps},
                                    {"inits", jrows},
                                    {"max_d_cool", max_cool},
                                    {"mean_d_lambda", sum_full / n},
                                    {"mean_d_half_lambda", sum_half / n},
                                    {"half_ratio", sum_full > 0.0 ? jnum(sum_half / sum_full) : json(nullptr)}};

  CommandResult out;
  out.files = {{"props.json", dump(report)}, {"cooldown_convergence.csv", ccsv.str()}};
  out.report = report;
  return out;
}

CommandResult run_sadiag(const ExperimentConfig& cfg) {
  const GameSpec game = cfg.make_game();
  const auto& sd = cfg.sadiag;
  const Arm arm = parse_arm(sd.moment_arm);
  for (std::size_t p = 0; p < sd.points.size(); ++p)
    if (sd.points[p].size() != game.param_dim())
      throw ConfigError("sadiag.points[" + std::to_string(p) + "]",
                        "needs one probability per parameter (" + std::to_string(game.param_dim()) + ")");
  if (!sd.bias_horizons.empty() && sd.bias_horizons.back() > cfg.batch.horizon)
    throw ConfigError("sadiag.bias_horizons", "largest horizon exceeds batch.horizon");

  struct PointResult {
    SaDiagnostics diag;
    std::vector<double> moments;
  };
  const auto results = parallel_map<PointResult>(sd.points.size(), [&](std::size_t p) {
    const JointParams at = params_from_probabilities(game, sd.points[p]);
    Stream stream(cfg.master_seed, "sadiag", {p});
    PointResult r;
    r.diag = sa_diagnostics(game, at, arm, sd.lambda, cfg.unroll, cfg.batch, sd.repeats, sd.bias_horizons, stream);
    for (std::size_t k = 0; k < sd.moment_lengths.size(); ++k) {
      UnrollConfig u = cfg.unroll;
      u.length = sd.moment_lengths[k];
      Stream ms(cfg.master_seed, "sadiag-moment", {p, k});
      r.moments.push_back(
          sampled_second_moment(game, at, arm, sd.moment_lambda, u, cfg.batch, sd.moment_repeats, ms));
    }
    return r;
  });

  json report;
  report["experiment"] = "sadiag";
  report["game"] = to_string(game.kind());
  report["arm"] = to_string(arm);
  report["lambda"] = sd.lambda;
  report["repeats"] = sd.repeats;
  report["batch"] = {{"count", cfg.batch.count}, {"horizon", cfg.batch.horizon}, {"baseline", cfg.batch.baseline}};
  json pts = json::array();
  bool all_noise = true, all_bias = true;
  for (std::size_t p = 0; p < results.size(); ++p) {
    const auto& d = results[p].diag;
    all_noise = all_noise && d.noise_ok;
    all_bias = all_bias && d.bias_ok;
    json moments = json::array();
    for (std::size_t k = 0; k < sd.moment_lengths.size(); ++k)
      moments.push_back({{"unroll_length", sd.moment_lengths[k]}, {"second_moment", jnum(results[p].moments[k])}});
    pts.push_back({{"probabilities", sd.points[p]},
                   {"noise_mean", jvec(d.noise_mean)},
                   {"noise_mean_norm", jnum(d.noise_mean_norm)},
                   {"sigma_hat", jnum(d.sigma_hat)},
                   {"noise_bound", jnum(d.noise_bound)},
                   {"noise_ok", d.noise_ok},
                   {"second_moment", jnum(d.second_moment)},
                   {"horizons", d.horizons},
                   {"bias_norm", jvec(d.bias_norm)},
                   {"bias_se", jvec(d.bias_se)},
                   {"log_ratio", jvec(d.log_ratio)},
                   {"bias_ok", d.bias_ok},
                   {"moments", moments}});
  }
  report["moment_arm"] = sd.moment_arm;
  report["moment_lambda"] = sd.moment_lambda;
  report["points"] = pts;
  report["noise_ok"] = all_noise;
  report["bias_ok"] = all_bias;

  CommandResult out;
  out.files = {{"sadiag.json", dump(report)}};
  out.report = report;
  return out;
}

CommandResult run_experiment(const ExperimentConfig& cfg) {
  const std::string& e = cfg.experiment;
  if (e == "sweep") return run_sweep(cfg);
  if (e == "ablate") return run_ablation(cfg);
  if (e == "cooldown") return run_cooldown(cfg);
  if (e == "align") return run_align(cfg);
  if (e == "lambda") return run_lambda(cfg);
  if (e == "normctl") return run_normctl(cfg);
  if (e == "tausweep") return run_tausweep(cfg);
  if (e == "props") return run_props(cfg);
  if (e == "sadiag") return run_sadiag(cfg);
  throw ConfigError("experiment", "unknown experiment '" + e + "'");
}

}  // namespace basinlab
