#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "basinlab/fields.hpp"
#include "basinlab/game.hpp"
#include "basinlab/learners.hpp"

namespace basinlab {

// Initialisation grid over the cooperate-probability square. Grid points sit
// at lo + (hi - lo) * idx / (n - 1) on each axis (a single point sits at the
// midpoint).
struct GridSpec {
  int n1 = 21;
  int n2 = 21;
  double lo = 0.05;
  double hi = 0.95;

  void validate() const;
  std::size_t cells() const { return static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2); }
  double p1(int i) const;
  double p2(int j) const;
  std::size_t cell(int i, int j) const { return static_cast<std::size_t>(i) * n2 + j; }
};

struct BasinGrid {
  GridSpec spec;
  std::string game_tag;
  std::vector<std::string> arms;
  int seeds_per_cell = 1;
  std::vector<std::vector<int>> successes;        // [arm][cell]
  std::vector<std::vector<int>> diverged;         // [arm][cell]
  std::vector<std::vector<double>> mean_metric;   // [arm][cell]

  std::size_t arm_index(const std::string& arm) const;
  double rate(std::size_t arm, std::size_t cell) const;
  std::vector<double> rates(std::size_t arm) const;
};

// Every treatment from every cell centre, seeds_per_cell paired seeds each.
BasinGrid grid_sweep(const GameSpec& game, const std::vector<Treatment>& treatments, const GridSpec& grid,
                     int seeds_per_cell, const UnrollConfig& cfg, const RunOptions& options,
                     std::uint64_t master_seed);

// Fraction of cells whose success rate is at least one half.
double coverage(const BasinGrid& grid, const std::string& arm);

struct Polyline {
  std::vector<std::pair<double, double>> points;
  bool closed = false;
};

struct Contour {
  std::vector<Polyline> lines;
  bool all_success = false;
  bool all_fail = false;
};

// 0.5-level contour of a rate surface sampled at the grid points.
Contour half_level_contour(const GridSpec& grid, const std::vector<double>& rates);
Contour separatrix(const BasinGrid& grid, const std::string& arm);

struct CellMasks {
  int n1 = 0;
  int n2 = 0;
  std::vector<bool> gained;
  std::vector<bool> lost;

  int gained_count() const;
  int lost_count() const;
};

CellMasks masks(const BasinGrid& grid, const std::string& base = "pg", const std::string& treat = "meta_mapg");

struct WilsonInterval {
  int k = 0;
  int n = 0;
  double z = 1.959964;
  double lo = 0.0;
  double hi = 1.0;
};

WilsonInterval wilson(int k, int n, double z = 1.959964);
bool overlap(const WilsonInterval& a, const WilsonInterval& b);

// Cosine between the probability-space image of a theta-space step and the
// direction from (p1, p2) toward (1, 1). Returns false (excluded) when the
// step or the direction has norm below 1e-12.
bool alignment_cosine(double p1, double p2, double dtheta1, double dtheta2, double& cosine);

struct AlignmentCell {
  int i = 0;
  int j = 0;
  double p1 = 0.0;
  double p2 = 0.0;
  double dp1 = 0.0;
  double dp2 = 0.0;
  double cosine = 0.0;
  bool excluded = false;
  bool gained = false;
};

struct CosineSummary {
  int count = 0;
  int excluded = 0;
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct AlignmentReport {
  std::vector<AlignmentCell> cells;
  CosineSummary all;
  CosineSummary gained;
};

CosineSummary summarize_cosines(const std::vector<AlignmentCell>& cells, bool gained_only);

// First-update peer correction at every cell centre (two-parameter games).
AlignmentReport alignment_stats(const GameSpec& game, const GridSpec& grid, const UnrollConfig& cfg, double lambda,
                                const CellMasks* cell_masks);

struct LambdaSweep {
  std::vector<double> lambdas;
  std::vector<double> coverage;
  double slack = 0.02;
  bool monotone = true;
  double gain = 0.0;  // coverage at the largest lambda minus coverage at 0
};

// meta_mapg grid sweeps across lambda; lambda = 0 is plain PG.
LambdaSweep lambda_sweep(const GameSpec& game, const std::vector<double>& lambdas, const GridSpec& grid,
                         int seeds_per_cell, const Schedule& schedule, const UnrollConfig& cfg,
                         const RunOptions& options, std::uint64_t master_seed, double slack = 0.02);

struct NormMatchedReport {
  int early_steps = 10;
  double meta_norm = 0.0;
  double pg_norm = 0.0;
  double ratio = 1.0;
  double base_alpha = 0.0;
  double matched_alpha = 0.0;
  double coverage_pg = 0.0;
  double coverage_meta = 0.0;
  double coverage_matched_pg = 0.0;
};

// Scales the PG step by the ratio of meta_mapg's to PG's mean update norm
// over the first early_steps outer steps, then re-sweeps PG.
NormMatchedReport norm_matched_control(const GameSpec& game, const GridSpec& grid, int seeds_per_cell,
                                       const Schedule& schedule, const UnrollConfig& cfg,
                                       const RunOptions& options, std::uint64_t master_seed,
                                       int early_steps = 10);

struct ThresholdRow {
  double tau = 0.0;
  std::vector<std::string> labels;
  std::vector<int> successes;
  std::vector<int> trials;
  double gap = 0.0;  // min over peer arms minus max over non-peer arms
};

// Reclassifies stored metrics at every tau without re-running.
std::vector<ThresholdRow> threshold_sweep(const std::vector<RunRecord>& runs, const std::vector<double>& taus);

}  // namespace basinlab
