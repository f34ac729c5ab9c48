#include "basinlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "basinlab/errors.hpp"
#include "basinlab/parallel.hpp"

namespace basinlab {

void GridSpec::validate() const {
  if (n1 < 1 || n2 < 1) throw ContractError("grid: both axes need at least one point");
  if (!(lo > 0.0 && hi < 1.0 && lo <= hi)) throw ContractError("grid: bounds must satisfy 0 < lo <= hi < 1");
}

namespace {
double axis_point(int idx, int n, double lo, double hi) {
  if (n == 1) return 0.5 * (lo + hi);
  return lo + (hi - lo) * static_cast<double>(idx) / static_cast<double>(n - 1);
}
}  // namespace

double GridSpec::p1(int i) const { return axis_point(i, n1, lo, hi); }
double GridSpec::p2(int j) const { return axis_point(j, n2, lo, hi); }

std::size_t BasinGrid::arm_index(const std::string& arm) const {
  const auto it = std::find(arms.begin(), arms.end(), arm);
  if (it == arms.end()) throw ContractError("basin grid has no arm '" + arm + "'");
  return static_cast<std::size_t>(it - arms.begin());
}

double BasinGrid::rate(std::size_t arm, std::size_t cell) const {
  return static_cast<double>(successes[arm][cell]) / static_cast<double>(seeds_per_cell);
}

std::vector<double> BasinGrid::rates(std::size_t arm) const {
  std::vector<double> r(spec.cells());
  for (std::size_t c = 0; c < r.size(); ++c) r[c] = rate(arm, c);
  return r;
}

BasinGrid grid_sweep(const GameSpec& game, const std::vector<Treatment>& treatments, const GridSpec& grid,
                     int seeds_per_cell, const UnrollConfig& cfg, const RunOptions& options,
                     std::uint64_t master_seed) {
  grid.validate();
  if (game.param_dim() != 2) throw ContractError("grid_sweep: needs a game with two parameters");
  if (seeds_per_cell < 1) throw ContractError("grid_sweep: seeds_per_cell must be at least 1");
  if (treatments.empty()) throw ContractError("grid_sweep: no treatments");

  const std::size_t nt = treatments.size();
  const std::size_t ns = static_cast<std::size_t>(seeds_per_cell);
  const std::size_t jobs = grid.cells() * ns * nt;
  struct Outcome {
    bool success = false;
    bool diverged = false;
    double metric = 0.0;
  };
  const auto outcomes = parallel_map<Outcome>(jobs, [&](std::size_t job) {
    const std::size_t t = job % nt;
    const std::size_t seed = (job / nt) % ns;
    const std::size_t cell = job / (nt * ns);
    const int i = static_cast<int>(cell / static_cast<std::size_t>(grid.n2));
    const int j = static_cast<int>(cell % static_cast<std::size_t>(grid.n2));
    const std::vector<double> probs{grid.p1(i), grid.p2(j)};
    const JointParams init = params_from_probabilities(game, probs);
    Stream stream(master_seed, "cell-run", {cell, seed});
    const RunRecord r = run(game, treatments[t].arm, init, treatments[t].schedule, cfg, options, stream);
    return Outcome{r.success, r.diverged, r.metric};
  });

  BasinGrid out;
  out.spec = grid;
  out.game_tag = to_string(game.kind());
  out.seeds_per_cell = seeds_per_cell;
  for (const auto& t : treatments) out.arms.push_back(t.label.empty() ? to_string(t.arm) : t.label);
  out.successes.assign(nt, std::vector<int>(grid.cells(), 0));
  out.diverged.assign(nt, std::vector<int>(grid.cells(), 0));
  out.mean_metric.assign(nt, std::vector<double>(grid.cells(), 0.0));
  for (std::size_t job = 0; job < jobs; ++job) {
    const std::size_t t = job % nt;
    const std::size_t cell = job / (nt * ns);
    const Outcome& o = outcomes[job];
    out.successes[t][cell] += o.success ? 1 : 0;
    out.diverged[t][cell] += o.diverged ? 1 : 0;
    out.mean_metric[t][cell] += (o.diverged ? 0.0 : o.metric) / static_cast<double>(ns);
  }
  return out;
}

double coverage(const BasinGrid& grid, const std::string& arm) {
  const std::size_t a = grid.arm_index(arm);
  const std::size_t cells = grid.spec.cells();
  std::size_t covered = 0;
  for (std::size_t c = 0; c < cells; ++c)
    if (2 * grid.successes[a][c] >= grid.seeds_per_cell) ++covered;
  return static_cast<double>(covered) / static_cast<double>(cells);
}

// ---------------------------------------------------------------------------
// Marching squares

namespace {

struct Segment {
  std::size_t edge[2];
  std::pair<double, double> point[2];
};

}  // namespace

Contour half_level_contour(const GridSpec& grid, const std::vector<double>& rates) {
  grid.validate();
  if (rates.size() != grid.cells()) throw ContractError("contour: rate surface has the wrong size");
  constexpr double level = 0.5;
  Contour out;
  const bool any_above = std::any_of(rates.begin(), rates.end(), [](double r) { return r >= level; });
  const bool any_below = std::any_of(rates.begin(), rates.end(), [](double r) { return r < level; });
  out.all_success = !any_below;
  out.all_fail = !any_above;
  if (out.all_success || out.all_fail) return out;

  const auto f = [&](int i, int j) { return rates[grid.cell(i, j)]; };
  // Horizontal edge (i,j)-(i+1,j) has id 2*cell(i,j); vertical (i,j)-(i,j+1)
  // has id 2*cell(i,j)+1.
  const auto h_id = [&](int i, int j) { return 2 * grid.cell(i, j); };
  const auto v_id = [&](int i, int j) { return 2 * grid.cell(i, j) + 1; };
  const auto cross = [&](double x0, double y0, double f0, double x1, double y1, double f1) {
    const double t = (level - f0) / (f1 - f0);
    return std::make_pair(x0 + t * (x1 - x0), y0 + t * (y1 - y0));
  };

  std::vector<Segment> segments;
  for (int i = 0; i + 1 < grid.n1; ++i) {
    for (int j = 0; j + 1 < grid.n2; ++j) {
      const double x0 = grid.p1(i), x1 = grid.p1(i + 1), y0 = grid.p2(j), y1 = grid.p2(j + 1);
      const double fa = f(i, j), fb = f(i + 1, j), fc = f(i + 1, j + 1), fd = f(i, j + 1);
      // Edges: 0 bottom a-b, 1 right b-c, 2 top d-c, 3 left a-d.
      const std::size_t ids[4] = {h_id(i, j), v_id(i + 1, j), h_id(i, j + 1), v_id(i, j)};
      const bool above[4] = {fa >= level, fb >= level, fc >= level, fd >= level};
      std::pair<double, double> pts[4];
      if (above[0] != above[1]) pts[0] = cross(x0, y0, fa, x1, y0, fb);
      if (above[1] != above[2]) pts[1] = cross(x1, y0, fb, x1, y1, fc);
      if (above[3] != above[2]) pts[2] = cross(x0, y1, fd, x1, y1, fc);
      if (above[0] != above[3]) pts[3] = cross(x0, y0, fa, x0, y1, fd);
      const int code = (above[0] ? 1 : 0) | (above[1] ? 2 : 0) | (above[2] ? 4 : 0) | (above[3] ? 8 : 0);
      if (code == 0 || code == 15) continue;
      const auto add = [&](int e0, int e1) { segments.push_back({{ids[e0], ids[e1]}, {pts[e0], pts[e1]}}); };
      const bool centre_above = 0.25 * (fa + fb + fc + fd) >= level;
      switch (code) {
        case 1: case 14: add(3, 0); break;
        case 2: case 13: add(0, 1); break;
        case 3: case 12: add(3, 1); break;
        case 4: case 11: add(1, 2); break;
        case 6: case 9: add(0, 2); break;
        case 7: case 8: add(3, 2); break;
        case 5:  // a and c above
          if (centre_above) { add(0, 1); add(2, 3); } else { add(3, 0); add(1, 2); }
          break;
        case 10:  // b and d above
          if (centre_above) { add(3, 0); add(1, 2); } else { add(0, 1); add(2, 3); }
          break;
        default:
          break;
      }
    }
  }

  // Chain segments through shared edges.
  std::map<std::size_t, std::vector<std::size_t>> by_edge;
  for (std::size_t s = 0; s < segments.size(); ++s)
    for (std::size_t e : segments[s].edge) by_edge[e].push_back(s);
  std::vector<bool> used(segments.size(), false);

  const auto walk = [&](std::size_t start, std::size_t start_edge_slot) {
    Polyline line;
    std::size_t s = start;
    std::size_t entry = start_edge_slot;
    line.points.push_back(segments[s].point[entry]);
    for (;;) {
      used[s] = true;
      const std::size_t exit_slot = 1 - entry;
      line.points.push_back(segments[s].point[exit_slot]);
      const std::size_t edge = segments[s].edge[exit_slot];
      std::size_t next = segments.size();
      for (std::size_t cand : by_edge[edge])
        if (!used[cand]) next = cand;
      if (next == segments.size()) {
        if (edge == segments[start].edge[start_edge_slot] && line.points.size() > 2) {
          line.closed = true;
          line.points.back() = line.points.front();
        }
        break;
      }
      entry = segments[next].edge[0] == edge ? 0 : 1;
      s = next;
    }
    return line;
  };

  // Open polylines start at edges used by a single segment (the grid border).
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (used[s]) continue;
    for (std::size_t slot = 0; slot < 2; ++slot) {
      if (by_edge[segments[s].edge[slot]].size() == 1) {
        out.lines.push_back(walk(s, slot));
        break;
      }
    }
  }
  for (std::size_t s = 0; s < segments.size(); ++s)
    if (!used[s]) out.lines.push_back(walk(s, 0));
  return out;
}

Contour separatrix(const BasinGrid& grid, const std::string& arm) {
  return half_level_contour(grid.spec, grid.rates(grid.arm_index(arm)));
}

int CellMasks::gained_count() const { return static_cast<int>(std::count(gained.begin(), gained.end(), true)); }
int CellMasks::lost_count() const { return static_cast<int>(std::count(lost.begin(), lost.end(), true)); }

CellMasks masks(const BasinGrid& grid, const std::string& base, const std::string& treat) {
  const std::size_t b = grid.arm_index(base);
  const std::size_t t = grid.arm_index(treat);
  CellMasks m;
  m.n1 = grid.spec.n1;
  m.n2 = grid.spec.n2;
  m.gained.assign(grid.spec.cells(), false);
  m.lost.assign(grid.spec.cells(), false);
  for (std::size_t c = 0; c < grid.spec.cells(); ++c) {
    const bool base_ok = 2 * grid.successes[b][c] >= grid.seeds_per_cell;
    const bool treat_ok = 2 * grid.successes[t][c] >= grid.seeds_per_cell;
    m.gained[c] = treat_ok && !base_ok;
    m.lost[c] = base_ok && !treat_ok;
  }
  return m;
}

WilsonInterval wilson(int k, int n, double z) {
  if (n < 1) throw ContractError("wilson: need at least one trial");
  if (k < 0 || k > n) throw ContractError("wilson: successes must lie in [0, n]");
  if (!(z > 0.0) || !std::isfinite(z)) throw ContractError("wilson: z must be positive");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  WilsonInterval w{k, n, z, std::max(0.0, centre - half), std::min(1.0, centre + half)};
  if (k == 0) w.lo = 0.0;
  if (k == n) w.hi = 1.0;
  return w;
}

bool overlap(const WilsonInterval& a, const WilsonInterval& b) { return a.lo <= b.hi && b.lo <= a.hi; }

bool alignment_cosine(double p1, double p2, double dtheta1, double dtheta2, double& cosine) {
  const double dp1 = dtheta1 * p1 * (1.0 - p1);
  const double dp2 = dtheta2 * p2 * (1.0 - p2);
  const double u1 = 1.0 - p1;
  const double u2 = 1.0 - p2;
  const double nd = std::hypot(dp1, dp2);
  const double nu = std::hypot(u1, u2);
  if (std::hypot(dtheta1, dtheta2) < 1e-12 || nd < 1e-300 || nu < 1e-12) return false;
  cosine = std::clamp((dp1 * u1 + dp2 * u2) / (nd * nu), -1.0, 1.0);
  return true;
}

CosineSummary summarize_cosines(const std::vector<AlignmentCell>& cells, bool gained_only) {
  CosineSummary s;
  std::vector<double> c;
  for (const auto& cell : cells) {
    if (gained_only && !cell.gained) continue;
    if (cell.excluded) {
      ++s.excluded;
      continue;
    }
    c.push_back(cell.cosine);
  }
  s.count = static_cast<int>(c.size());
  if (c.empty()) {
    s.mean = s.median = s.min = s.max = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  std::sort(c.begin(), c.end());
  double total = 0.0;
  for (double x : c) total += x;
  s.mean = total / static_cast<double>(c.size());
  const std::size_t m = c.size() / 2;
  s.median = c.size() % 2 ? c[m] : 0.5 * (c[m - 1] + c[m]);
  s.min = c.front();
  s.max = c.back();
  return s;
}

AlignmentReport alignment_stats(const GameSpec& game, const GridSpec& grid, const UnrollConfig& cfg, double lambda,
                                const CellMasks* cell_masks) {
  grid.validate();
  if (game.param_dim() != 2) throw ContractError("alignment_stats: needs a game with two parameters");
  if (cell_masks && cell_masks->gained.size() != grid.cells())
    throw ContractError("alignment_stats: masks do not match the grid");
  AlignmentReport rep;
  rep.cells = parallel_map<AlignmentCell>(grid.cells(), [&](std::size_t cell) {
    AlignmentCell a;
    a.i = static_cast<int>(cell / static_cast<std::size_t>(grid.n2));
    a.j = static_cast<int>(cell % static_cast<std::size_t>(grid.n2));
    a.p1 = grid.p1(a.i);
    a.p2 = grid.p2(a.j);
    const std::vector<double> probs{a.p1, a.p2};
    const auto c = eval_corrections(game, params_from_probabilities(game, probs), cfg);
    const double d1 = lambda * c.m_peer[0];
    const double d2 = lambda * c.m_peer[1];
    a.dp1 = d1 * a.p1 * (1.0 - a.p1);
    a.dp2 = d2 * a.p2 * (1.0 - a.p2);
    a.excluded = !alignment_cosine(a.p1, a.p2, d1, d2, a.cosine);
    if (a.excluded) a.cosine = std::numeric_limits<double>::quiet_NaN();
    a.gained = cell_masks && cell_masks->gained[cell];
    return a;
  });
  rep.all = summarize_cosines(rep.cells, false);
  rep.gained = summarize_cosines(rep.cells, true);
  return rep;
}

LambdaSweep lambda_sweep(const GameSpec& game, const std::vector<double>& lambdas, const GridSpec& grid,
                         int seeds_per_cell, const Schedule& schedule, const UnrollConfig& cfg,
                         const RunOptions& options, std::uint64_t master_seed, double slack) {
  if (lambdas.empty()) throw ContractError("lambda_sweep: empty lambda grid");
  if (std::find(lambdas.begin(), lambdas.end(), 0.0) == lambdas.end())
    throw ContractError("lambda_sweep: the lambda grid must include 0");
  if (!std::is_sorted(lambdas.begin(), lambdas.end()))
    throw ContractError("lambda_sweep: the lambda grid must be ascending");
  LambdaSweep out;
  out.lambdas = lambdas;
  out.slack = slack;
  std::vector<Treatment> ts;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    Schedule s = schedule;
    s.lambda = lambdas[k];
    ts.push_back({"lambda_" + std::to_string(k), Arm::meta_mapg, s});
  }
  const BasinGrid g = grid_sweep(game, ts, grid, seeds_per_cell, cfg, options, master_seed);
  for (const auto& t : ts) out.coverage.push_back(coverage(g, t.label));
  for (std::size_t k = 1; k < out.coverage.size(); ++k)
    if (out.coverage[k] < out.coverage[k - 1] - slack - 1e-12) out.monotone = false;
  const auto zero = static_cast<std::size_t>(std::find(lambdas.begin(), lambdas.end(), 0.0) - lambdas.begin());
  out.gain = out.coverage.back() - out.coverage[zero];
  return out;
}

NormMatchedReport norm_matched_control(const GameSpec& game, const GridSpec& grid, int seeds_per_cell,
                                       const Schedule& schedule, const UnrollConfig& cfg,
                                       const RunOptions& options, std::uint64_t master_seed, int early_steps) {
  grid.validate();
  if (early_steps < 1) throw ContractError("norm_matched_control: early_steps must be at least 1");
  NormMatchedReport rep;
  rep.early_steps = early_steps;

  // Mean update norm over the first outer steps, averaged over cell centres.
  const auto early_norm = [&](Arm arm) {
    Schedule s = schedule;
    s.total_steps = std::min(early_steps, schedule.total_steps);
    RunOptions o = options;
    o.max_checkpoints = s.total_steps + 2;
    const auto per_cell = parallel_map<double>(grid.cells(), [&](std::size_t cell) {
      const int i = static_cast<int>(cell / static_cast<std::size_t>(grid.n2));
      const int j = static_cast<int>(cell % static_cast<std::size_t>(grid.n2));
      const std::vector<double> probs{grid.p1(i), grid.p2(j)};
      Stream stream(master_seed, "cell-run", {cell, 0});
      const RunRecord r = run(game, arm, params_from_probabilities(game, probs), s, cfg, o, stream);
      double total = 0.0;
      int count = 0;
      for (const auto& c : r.checkpoints)
        if (c.step < s.total_steps) {
          total += c.update_norm;
          ++count;
        }
      return count ? total / count : 0.0;
    });
    double total = 0.0;
    for (double x : per_cell) total += x;
    return total / static_cast<double>(per_cell.size());
  };
  rep.meta_norm = early_norm(Arm::meta_mapg);
  rep.pg_norm = early_norm(Arm::pg);
  rep.ratio = rep.pg_norm > 0.0 ? rep.meta_norm / rep.pg_norm : 1.0;

  Schedule matched = schedule;
  if (matched.step_rule == StepRule::constant) {
    rep.base_alpha = schedule.alpha;
    matched.alpha = schedule.alpha * rep.ratio;
    rep.matched_alpha = matched.alpha;
  } else {
    rep.base_alpha = schedule.c;
    matched.c = schedule.c * rep.ratio;
    rep.matched_alpha = matched.c;
  }
  const std::vector<Treatment> ts{{"pg", Arm::pg, schedule},
                                  {"meta_mapg", Arm::meta_mapg, schedule},
                                  {"matched_pg", Arm::pg, matched}};
  const BasinGrid g = grid_sweep(game, ts, grid, seeds_per_cell, cfg, options, master_seed);
  rep.coverage_pg = coverage(g, "pg");
  rep.coverage_meta = coverage(g, "meta_mapg");
  rep.coverage_matched_pg = coverage(g, "matched_pg");
  return rep;
}

std::vector<ThresholdRow> threshold_sweep(const std::vector<RunRecord>& runs, const std::vector<double>& taus) {
  if (taus.empty()) throw ContractError("threshold_sweep: empty tau grid");
  for (double t : taus)
    if (!(t > 0.0 && t < 1.0)) throw ContractError("threshold_sweep: every tau must lie in (0, 1)");
  std::vector<std::string> labels;
  std::vector<bool> peer;
  for (const auto& r : runs)
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) {
      labels.push_back(r.label);
      peer.push_back(uses_peer(r.arm) && r.schedule.lambda > 0.0);
    }
  std::vector<ThresholdRow> rows;
  for (double tau : taus) {
    ThresholdRow row;
    row.tau = tau;
    row.labels = labels;
    row.successes.assign(labels.size(), 0);
    row.trials.assign(labels.size(), 0);
    for (const auto& r : runs) {
      const auto k = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), r.label) - labels.begin());
      ++row.trials[k];
      if (!r.diverged && r.metric >= tau) ++row.successes[k];
    }
    double min_peer = std::numeric_limits<double>::infinity();
    double max_other = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < labels.size(); ++k) {
      const double rate = static_cast<double>(row.successes[k]) / static_cast<double>(row.trials[k]);
      if (peer[k])
        min_peer = std::min(min_peer, rate);
      else
        max_other = std::max(max_other, rate);
    }
    row.gap = std::isfinite(min_peer) && std::isfinite(max_other) ? min_peer - max_other
                                                                   : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace basinlab
