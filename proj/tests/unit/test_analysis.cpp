#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "basinlab/analysis.hpp"
#include "basinlab/errors.hpp"

using namespace basinlab;

namespace {

GameSpec stag_hunt() { return make_stag_hunt(default_stag_hunt_payoffs(), 0.9); }

// Hand-built grid with the given per-cell success counts.
BasinGrid synthetic_grid(int n1, int n2, int seeds, const std::vector<std::vector<int>>& successes,
                         std::vector<std::string> arms) {
  BasinGrid g;
  g.spec = GridSpec{n1, n2, 0.05, 0.95};
  g.seeds_per_cell = seeds;
  g.arms = std::move(arms);
  g.successes = successes;
  g.diverged.assign(successes.size(), std::vector<int>(g.spec.cells(), 0));
  g.mean_metric.assign(successes.size(), std::vector<double>(g.spec.cells(), 0.0));
  return g;
}

// Wilson bounds as the roots of (p_hat - p)^2 = z^2 p (1 - p) / n.
std::pair<double, double> wilson_roots(int k, int n, double z) {
  const double ph = static_cast<double>(k) / n;
  const double a = 1.0 + z * z / n;
  const double b = -(2.0 * ph + z * z / n);
  const double c = ph * ph;
  const double disc = std::sqrt(b * b - 4 * a * c);
  return {(-b - disc) / (2 * a), (-b + disc) / (2 * a)};
}

RunRecord record(const std::string& label, Arm arm, double lambda, double metric) {
  RunRecord r;
  r.label = label;
  r.arm = arm;
  r.schedule.lambda = lambda;
  r.metric = metric;
  return r;
}

}  // namespace

TEST_CASE("grid geometry") {
  const GridSpec g{21, 21, 0.05, 0.95};
  CHECK(g.p1(0) == 0.05);
  CHECK(g.p1(20) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(g.p2(10) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(GridSpec{1, 1, 0.2, 0.4}.p1(0) == doctest::Approx(0.3));
  CHECK_THROWS_AS((GridSpec{0, 3, 0.05, 0.95}.validate()), ContractError);
  CHECK_THROWS_AS((GridSpec{3, 3, 0.0, 0.95}.validate()), ContractError);
}

TEST_CASE("a deep-basin cell succeeds with rate one") {
  const GameSpec g = stag_hunt();
  const std::vector<Treatment> ts{{"pg", Arm::pg, constant_schedule(0.2, 0.0, 300)}};
  const BasinGrid grid = grid_sweep(g, ts, GridSpec{1, 1, 0.93, 0.93}, 1, UnrollConfig{}, RunOptions{}, 1);
  CHECK(grid.rate(0, 0) == 1.0);
  CHECK(coverage(grid, "pg") == 1.0);
}

TEST_CASE("exact-mode seeds within a cell agree") {
  const GameSpec g = stag_hunt();
  const std::vector<Treatment> ts{{"pg", Arm::pg, constant_schedule(0.2, 0.0, 150)},
                                  {"meta_mapg", Arm::meta_mapg, constant_schedule(0.2, 1.0, 150)}};
  const BasinGrid grid = grid_sweep(g, ts, GridSpec{4, 4, 0.2, 0.8}, 5, UnrollConfig{}, RunOptions{}, 3);
  REQUIRE(grid.successes.size() == 2);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t c = 0; c < grid.spec.cells(); ++c) {
      CHECK((grid.successes[a][c] == 0 || grid.successes[a][c] == 5));
      CHECK(grid.diverged[a][c] == 0);
    }
  // Success is monotone along the diagonal for pg: the corners disagree.
  CHECK(grid.successes[0][0] == 0);
  CHECK(grid.successes[0][grid.spec.cell(3, 3)] == 5);
  CHECK_THROWS_AS(grid.arm_index("own_only"), ContractError);
}

TEST_CASE("coverage follows the half-of-seeds rule and ignores cell order") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> k(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> counts(36);
    for (int& c : counts) c = k(rng);
    const BasinGrid g = synthetic_grid(6, 6, 4, {counts}, {"pg"});
    const double expected =
        static_cast<double>(std::count_if(counts.begin(), counts.end(), [](int c) { return c >= 2; })) / 36.0;
    CHECK(coverage(g, "pg") == expected);
    std::shuffle(counts.begin(), counts.end(), rng);
    CHECK(coverage(synthetic_grid(6, 6, 4, {counts}, {"pg"}), "pg") == expected);
  }
}

TEST_CASE("separatrix of degenerate surfaces is flagged") {
  const GridSpec spec{5, 5, 0.05, 0.95};
  const Contour all = half_level_contour(spec, std::vector<double>(25, 1.0));
  CHECK(all.all_success);
  CHECK(all.lines.empty());
  const Contour none = half_level_contour(spec, std::vector<double>(25, 0.0));
  CHECK(none.all_fail);
  CHECK(none.lines.empty());
  CHECK_THROWS_AS(half_level_contour(spec, std::vector<double>(24, 0.0)), ContractError);
}

TEST_CASE("separatrix of an anti-diagonal step surface follows the anti-diagonal") {
  const GridSpec spec{21, 21, 0.05, 0.95};
  std::vector<double> rates(spec.cells());
  for (int i = 0; i < 21; ++i)
    for (int j = 0; j < 21; ++j) rates[spec.cell(i, j)] = spec.p1(i) + spec.p2(j) >= 1.0 ? 1.0 : 0.0;
  const Contour c = half_level_contour(spec, rates);
  REQUIRE(c.lines.size() == 1);
  CHECK_FALSE(c.lines[0].closed);
  const double width = (spec.hi - spec.lo) / 20.0;
  for (const auto& [x, y] : c.lines[0].points) CHECK(std::abs(x + y - 1.0) / std::sqrt(2.0) <= width);
  // The line runs from one border to the opposite one.
  const auto& front = c.lines[0].points.front();
  const auto& back = c.lines[0].points.back();
  CHECK(std::hypot(front.first - back.first, front.second - back.second) > 1.0);
}

TEST_CASE("separatrix around an interior blob is closed") {
  const GridSpec spec{9, 9, 0.05, 0.95};
  std::vector<double> rates(spec.cells(), 0.0);
  for (int i = 3; i <= 5; ++i)
    for (int j = 3; j <= 5; ++j) rates[spec.cell(i, j)] = 1.0;
  const Contour c = half_level_contour(spec, rates);
  REQUIRE(c.lines.size() == 1);
  CHECK(c.lines[0].closed);
  CHECK(c.lines[0].points.front() == c.lines[0].points.back());
}

TEST_CASE("gained and lost masks") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> k(0, 3);
  std::vector<int> a(16), b(16);
  for (int t = 0; t < 16; ++t) {
    a[t] = k(rng);
    b[t] = k(rng);
  }
  const BasinGrid g = synthetic_grid(4, 4, 3, {a, b}, {"pg", "meta_mapg"});
  const CellMasks self = masks(g, "pg", "pg");
  CHECK(self.gained_count() == 0);
  CHECK(self.lost_count() == 0);
  const CellMasks m = masks(g);
  for (std::size_t c = 0; c < 16; ++c) {
    CHECK_FALSE((m.gained[c] && m.lost[c]));
    CHECK(m.gained[c] == (b[c] >= 2 && a[c] < 2));
    CHECK(m.lost[c] == (a[c] >= 2 && b[c] < 2));
  }
  const BasinGrid all = synthetic_grid(4, 4, 3, {std::vector<int>(16, 0), std::vector<int>(16, 3)},
                                       {"pg", "meta_mapg"});
  CHECK(masks(all).gained_count() == 16);
  CHECK(masks(all).lost_count() == 0);
}

TEST_CASE("wilson intervals reproduce the published tables") {
  struct Row {
    int k, n;
    double lo, hi;  // percentage points, one decimal
  };
  const Row rows[] = {{27, 100, 19.3, 36.4}, {42, 100, 32.8, 51.8}, {8, 100, 4.1, 15.0},  {32, 100, 23.7, 41.7},
                      {37, 100, 28.2, 46.8}, {25, 80, 22.2, 42.1},  {33, 80, 31.1, 52.2}, {34, 80, 32.3, 53.4}};
  for (const auto& r : rows) {
    const auto w = wilson(r.k, r.n);
    INFO(r.k << "/" << r.n << " -> [" << 100 * w.lo << ", " << 100 * w.hi << "]");
    CHECK(std::abs(100 * w.lo - r.lo) <= 0.05 + 1e-9);
    CHECK(std::abs(100 * w.hi - r.hi) <= 0.05 + 1e-9);
  }
}

TEST_CASE("wilson interval matches the quadratic roots and its invariants") {
  for (int n : {1, 7, 50, 100, 333})
    for (int k = 0; k <= n; k += std::max(1, n / 9)) {
      const auto w = wilson(k, n);
      const auto [lo, hi] = wilson_roots(k, n, 1.959964);
      CHECK(w.lo == doctest::Approx(lo).epsilon(1e-12).scale(1.0));
      CHECK(w.hi == doctest::Approx(hi).epsilon(1e-12).scale(1.0));
      const double p = static_cast<double>(k) / n;
      CHECK(w.lo <= p);
      CHECK(p <= w.hi);
      CHECK(w.lo >= 0.0);
      CHECK(w.hi <= 1.0);
    }
  CHECK(wilson(0, 10).lo == 0.0);
  CHECK(wilson(10, 10).hi == 1.0);
  CHECK_THROWS_AS(wilson(11, 10), ContractError);
  CHECK_THROWS_AS(wilson(-1, 10), ContractError);
  CHECK_THROWS_AS(wilson(0, 0), ContractError);
  CHECK(overlap(wilson(42, 100), wilson(37, 100)));
  CHECK_FALSE(overlap(wilson(8, 100), wilson(42, 100)));
}

TEST_CASE("alignment cosine") {
  double c = 0.0;
  const double p1 = 0.3, p2 = 0.6;
  // d theta_i = 1 / p_i maps to d p_i = 1 - p_i.
  REQUIRE(alignment_cosine(p1, p2, 1.0 / p1, 1.0 / p2, c));
  CHECK(c == doctest::Approx(1.0).epsilon(1e-14));
  REQUIRE(alignment_cosine(p1, p2, -2.0 / p1, -2.0 / p2, c));
  CHECK(c == doctest::Approx(-1.0).epsilon(1e-14));
  // Probability-space step (-(1 - p2), 1 - p1) is orthogonal to the target.
  REQUIRE(alignment_cosine(p1, p2, -(1 - p2) / (p1 * (1 - p1)), (1 - p1) / (p2 * (1 - p2)), c));
  CHECK(std::abs(c) <= 1e-14);
  CHECK_FALSE(alignment_cosine(p1, p2, 0.0, 0.0, c));
}

TEST_CASE("alignment statistics over a grid") {
  const GameSpec g = stag_hunt();
  const GridSpec spec{3, 3, 0.2, 0.8};
  const AlignmentReport none = alignment_stats(g, spec, UnrollConfig{}, 0.0, nullptr);
  CHECK(none.all.excluded == 9);
  CHECK(none.all.count == 0);
  CHECK(std::isnan(none.all.mean));

  CellMasks m;
  m.n1 = m.n2 = 3;
  m.gained.assign(9, false);
  m.lost.assign(9, false);
  m.gained[4] = true;
  const AlignmentReport rep = alignment_stats(g, spec, UnrollConfig{}, 1.0, &m);
  CHECK(rep.all.count + rep.all.excluded == 9);
  CHECK(rep.gained.count + rep.gained.excluded == 1);
  for (const auto& cell : rep.cells) {
    if (cell.excluded) continue;
    CHECK(cell.cosine >= -1.0);
    CHECK(cell.cosine <= 1.0);
    // The stored probability-space step reproduces the cosine.
    const double u1 = 1 - cell.p1, u2 = 1 - cell.p2;
    const double expect = (cell.dp1 * u1 + cell.dp2 * u2) / (std::hypot(cell.dp1, cell.dp2) * std::hypot(u1, u2));
    CHECK(cell.cosine == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(rep.cells[4].gained);
  CHECK(rep.all.min <= rep.all.median);
  CHECK(rep.all.median <= rep.all.max);
}

TEST_CASE("lambda sweep reduces to pg at zero") {
  const GameSpec g = stag_hunt();
  const GridSpec spec{5, 5, 0.05, 0.95};
  const Schedule s = constant_schedule(0.2, 1.0, 150);
  const LambdaSweep sw = lambda_sweep(g, {0.0, 1.0}, spec, 1, s, UnrollConfig{}, RunOptions{}, 2);
  const BasinGrid pg = grid_sweep(g, {{"pg", Arm::pg, s}}, spec, 1, UnrollConfig{}, RunOptions{}, 2);
  CHECK(sw.coverage[0] == coverage(pg, "pg"));
  CHECK(sw.gain == sw.coverage[1] - sw.coverage[0]);
  CHECK_THROWS_AS(lambda_sweep(g, {0.5, 1.0}, spec, 1, s, UnrollConfig{}, RunOptions{}, 2), ContractError);
  CHECK_THROWS_AS(lambda_sweep(g, {1.0, 0.0}, spec, 1, s, UnrollConfig{}, RunOptions{}, 2), ContractError);
  CHECK_THROWS_AS(lambda_sweep(g, {}, spec, 1, s, UnrollConfig{}, RunOptions{}, 2), ContractError);
}

TEST_CASE("norm-matched control is the identity without shaping") {
  const GameSpec g = stag_hunt();
  const GridSpec spec{4, 4, 0.05, 0.95};
  const NormMatchedReport rep =
      norm_matched_control(g, spec, 1, constant_schedule(0.2, 0.0, 120), UnrollConfig{}, RunOptions{}, 5);
  CHECK(rep.ratio == 1.0);
  CHECK(rep.matched_alpha == rep.base_alpha);
  CHECK(rep.coverage_matched_pg == rep.coverage_pg);
  CHECK(rep.coverage_meta == rep.coverage_pg);
}

TEST_CASE("threshold sweep reclassifies stored metrics") {
  const std::vector<RunRecord> runs{record("pg", Arm::pg, 0.0, 0.85), record("peer_only", Arm::peer_only, 1.0, 0.85),
                                    record("pg", Arm::pg, 0.0, 0.1), record("peer_only", Arm::peer_only, 1.0, 0.95)};
  const auto rows = threshold_sweep(runs, {0.84, 0.86});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].labels == std::vector<std::string>{"pg", "peer_only"});
  CHECK(rows[0].successes == std::vector<int>{1, 2});
  CHECK(rows[1].successes == std::vector<int>{0, 1});
  CHECK(rows[0].trials == std::vector<int>{2, 2});
  CHECK(rows[0].gap == doctest::Approx(0.5));
  CHECK(rows[1].gap == doctest::Approx(0.5));

  RunRecord bad = record("pg", Arm::pg, 0.0, std::nan(""));
  bad.diverged = true;
  CHECK(threshold_sweep({bad}, {0.5})[0].successes[0] == 0);
  CHECK(std::isnan(threshold_sweep({bad}, {0.5})[0].gap));
  CHECK_THROWS_AS(threshold_sweep(runs, {}), ContractError);
  CHECK_THROWS_AS(threshold_sweep(runs, {1.0}), ContractError);
}
