#include "basinlab/stability.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "basinlab/errors.hpp"

namespace basinlab {

namespace {

Eigen::MatrixXd to_eigen(const ad::JacobianMatrix& j) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.rows), static_cast<Eigen::Index>(j.cols));
  for (std::size_t r = 0; r < j.rows; ++r)
    for (std::size_t c = 0; c < j.cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j(r, c);
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

std::vector<double> diff(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
  return d;
}

void require_stationary(const std::vector<double>& v) {
  if (norm(v) > 1e-4)
    throw ContractError("equilibrium is not near-stationary (|v| = " + std::to_string(norm(v)) + " > 1e-4)");
}

}  // namespace

std::vector<double> sample_ball(const std::vector<double>& centre, double radius, Stream& stream) {
  const std::size_t d = centre.size();
  std::vector<double> dir(d);
  double n = 0.0;
  while (n < 1e-12) {
    for (double& x : dir) x = stream.normal();
    n = norm(dir);
  }
  const double r = radius * std::pow(stream.uniform(), 1.0 / static_cast<double>(d));
  std::vector<double> out(d);
  for (std::size_t k = 0; k < d; ++k) out[k] = centre[k] + r * dir[k] / n;
  return out;
}

MuEstimate estimate_mu(const VectorField& v, const std::vector<double>& eq, double radius, int n_samples,
                       Stream& stream) {
  if (!(radius > 0.0) || n_samples < 1) throw ContractError("estimate_mu: need a positive radius and samples");
  require_stationary(v(eq));
  MuEstimate est;
  est.mu = std::numeric_limits<double>::infinity();
  for (int s = 0; s < n_samples; ++s) {
    const auto phi = sample_ball(eq, radius, stream);
    const auto d = diff(phi, eq);
    const double r2 = dot(d, d);
    if (r2 < 1e-24) continue;
    const double ratio = -dot(v(phi), d) / r2;
    est.mu = std::min(est.mu, ratio);
    if (ratio <= 0.0) ++est.violations;
    ++est.samples;
  }
  return est;
}

MuEstimate estimate_mu(const GameSpec& game, const JointParams& eq, double radius, int n_samples, Stream& stream) {
  return estimate_mu([&](const std::vector<double>& x) { return eval_v(game, make_params(game, x)); }, eq.values,
                     radius, n_samples, stream);
}

double symmetric_margin(const ad::JacobianMatrix& j) {
  if (j.rows != j.cols || j.rows == 0) throw ContractError("symmetric_margin: needs a non-empty square matrix");
  for (double x : j.entries)
    if (!std::isfinite(x)) throw NumericalError("mu_M", "Jacobian has non-finite entries");
  const Eigen::MatrixXd m = to_eigen(j);
  const Eigen::MatrixXd s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  return -eig.eigenvalues().maxCoeff();
}

double estimate_mu_M(const GameSpec& game, const JointParams& eq, const UnrollConfig& cfg, CorrectionPart part) {
  require_stationary(eval_v(game, eq));
  return symmetric_margin(correction_jacobian(game, eq, cfg, part));
}

double operator_norm(const ad::JacobianMatrix& j) {
  if (j.rows == 0 || j.cols == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(j));
  return svd.singularValues()(0);
}

NewtonResult damped_newton(const VectorField& f, const JacobianField& jac, std::vector<double> x0, double tol,
                           int max_iter) {
  NewtonResult res;
  res.x = std::move(x0);
  auto fx = f(res.x);
  res.residual = norm(fx);
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    if (res.residual <= tol) {
      res.converged = true;
      return res;
    }
    const Eigen::MatrixXd j = to_eigen(jac(res.x));
    const Eigen::Map<const Eigen::VectorXd> rhs(fx.data(), static_cast<Eigen::Index>(fx.size()));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
    if (!lu.isInvertible()) return res;
    const Eigen::VectorXd step = lu.solve(-rhs);
    double t = 1.0;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      std::vector<double> trial(res.x.size());
      for (std::size_t k = 0; k < trial.size(); ++k) trial[k] = res.x[k] + t * step(static_cast<Eigen::Index>(k));
      auto ft = f(trial);
      const double r = norm(ft);
      if (std::isfinite(r) && r < res.residual) {
        res.x = std::move(trial);
        fx = std::move(ft);
        res.residual = r;
        break;
      }
      if (halvings == 59) return res;  // no decrease along the Newton direction
    }
  }
  res.converged = res.residual <= tol;
  return res;
}

ShiftReport verify_fixed_point_shift(const FieldFamily& f, const JacobianFamily& jac, const std::vector<double>& eq,
                                     const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw ContractError("verify_fixed_point_shift: empty lambda grid");
  ShiftReport rep;
  for (double lambda : lambdas) {
    if (!(lambda >= 0.0)) throw ContractError("verify_fixed_point_shift: lambda must be non-negative");
    const auto nr = damped_newton([&](const std::vector<double>& x) { return f(x, lambda); },
                                  [&](const std::vector<double>& x) { return jac(x, lambda); }, eq);
    ShiftPoint p;
    p.lambda = lambda;
    p.zero = nr.x;
    p.displacement = diff(nr.x, eq);
    p.shift = norm(p.displacement);
    p.converged = nr.converged;
    p.iterations = nr.iterations;
    p.residual = nr.residual;
    rep.all_converged = rep.all_converged && nr.converged;
    rep.points.push_back(std::move(p));
  }
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& p : rep.points) {
    sxy += p.lambda * p.shift;
    sxx += p.lambda * p.lambda;
  }
  rep.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  double res2 = 0.0;
  double tot2 = 0.0;
  for (const auto& p : rep.points) {
    res2 += std::pow(p.shift - rep.slope * p.lambda, 2);
    tot2 += p.shift * p.shift;
  }
  rep.relative_residual = tot2 > 0.0 ? std::sqrt(res2 / tot2) : 0.0;

  // dx/dlambda at 0 from the implicit function theorem; M = F(., 1) - F(., 0).
  const auto f0 = f(eq, 0.0);
  const auto f1 = f(eq, 1.0);
  const auto m = diff(f1, f0);
  const Eigen::MatrixXd dv = to_eigen(jac(eq, 0.0));
  const Eigen::Map<const Eigen::VectorXd> mv(m.data(), static_cast<Eigen::Index>(m.size()));
  Eigen::FullPivLU<Eigen::MatrixXd> lu(dv);
  if (lu.isInvertible()) {
    const Eigen::VectorXd d = lu.solve(-mv);
    rep.implicit_derivative.assign(d.data(), d.data() + d.size());
  }
  return rep;
}

ShiftReport verify_fixed_point_shift(const GameSpec& game, const JointParams& eq, const UnrollConfig& cfg, Arm arm,
                                     const std::vector<double>& lambdas) {
  return verify_fixed_point_shift(
      [&](const std::vector<double>& x, double l) {
        return evaluate_field(game, make_params(game, x), cfg, arm, l).assembled;
      },
      [&](const std::vector<double>& x, double l) { return assembled_jacobian(game, make_params(game, x), cfg, arm, l); },
      eq.values, lambdas);
}

DriftReport verify_drift(const VectorField& f, const std::vector<double>& centre, double mu, double mu_M,
                         double lambda, double radius, int n_samples, Stream& stream) {
  if (!(radius > 0.0) || n_samples < 1) throw ContractError("verify_drift: need a positive radius and samples");
  DriftReport rep;
  rep.radius = radius;
  rep.rate = 0.5 * (mu + lambda * mu_M);
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < n_samples; ++s) {
    const auto phi = sample_ball(centre, radius, stream);
    const auto d = diff(phi, centre);
    const double lhs = dot(f(phi), d);
    const double rhs = -rep.rate * dot(d, d);
    const double margin = lhs - rhs;
    rep.worst_margin = std::max(rep.worst_margin, margin);
    if (margin > 0.0) ++rep.violations;
    ++rep.samples;
  }
  return rep;
}

double SOSEstimate::radius(double lambda) const {
  if (!(lipschitz > 0.0)) throw ContractError("SOSEstimate: Lipschitz estimate must be positive");
  return (mu + lambda * mu_M) / (2.0 * lipschitz);
}

double local_lipschitz(const JacobianField& jac, const std::vector<double>& centre, double radius, int n_samples,
                       Stream& stream) {
  double best = operator_norm(jac(centre));
  for (int s = 0; s < n_samples; ++s) best = std::max(best, operator_norm(jac(sample_ball(centre, radius, stream))));
  return best;
}

namespace {

struct Moments {
  std::vector<double> mean;
  double trace_cov = 0.0;
  double mean_sq = 0.0;
};

Moments moments(const std::vector<std::vector<double>>& xs) {
  Moments m;
  const std::size_t d = xs.front().size();
  const double n = static_cast<double>(xs.size());
  m.mean.assign(d, 0.0);
  for (const auto& x : xs)
    for (std::size_t k = 0; k < d; ++k) m.mean[k] += x[k] / n;
  for (const auto& x : xs) {
    m.mean_sq += dot(x, x) / n;
    for (std::size_t k = 0; k < d; ++k) m.trace_cov += (x[k] - m.mean[k]) * (x[k] - m.mean[k]);
  }
  m.trace_cov /= std::max(1.0, n - 1.0);
  return m;
}

}  // namespace

SaDiagnostics sa_diagnostics(const GameSpec& game, const JointParams& params, Arm arm, double lambda,
                             const UnrollConfig& cfg, const BatchSpec& batch, int repeats,
                             const std::vector<int>& bias_horizons, Stream& stream) {
  if (repeats < 50) throw ContractError("sa_diagnostics: repeats must be at least 50");
  SaDiagnostics rep;
  rep.repeats = repeats;
  const auto exact = evaluate_field(game, params, cfg, arm, lambda).assembled;

  std::vector<std::vector<double>> noise;
  noise.reserve(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) noise.push_back(diff(sampled_update(game, params, arm, lambda, cfg, batch, stream).g, exact));
  const Moments nm = moments(noise);
  rep.noise_mean = nm.mean;
  rep.noise_mean_norm = norm(nm.mean);
  rep.sigma_hat = std::sqrt(nm.trace_cov);
  rep.noise_bound = 3.0 * rep.sigma_hat / std::sqrt(static_cast<double>(repeats));
  rep.noise_ok = rep.noise_mean_norm <= rep.noise_bound;
  rep.second_moment = nm.mean_sq;

  rep.horizons = bias_horizons;
  if (!bias_horizons.empty()) {
    if (!std::is_sorted(bias_horizons.begin(), bias_horizons.end()) || bias_horizons.front() < 1)
      throw ContractError("sa_diagnostics: bias horizons must be positive and ascending");
    const auto v = eval_v(game, params);
    const int hmax = bias_horizons.back();
    std::vector<std::vector<std::vector<double>>> errs(bias_horizons.size());
    for (int r = 0; r < repeats; ++r) {
      const auto tb = sample_trajectories(game, params, batch.count, hmax, stream);
      for (std::size_t h = 0; h < bias_horizons.size(); ++h)
        errs[h].push_back(diff(sampled_v(game, tb, bias_horizons[h], batch.baseline), v));
    }
    for (const auto& e : errs) {
      const Moments m = moments(e);
      rep.bias_norm.push_back(norm(m.mean));
      rep.bias_se.push_back(std::sqrt(m.trace_cov / static_cast<double>(repeats)));
    }
    rep.bias_ok = true;
    for (std::size_t h = 0; h + 1 < rep.bias_norm.size(); ++h) {
      rep.log_ratio.push_back(std::log(rep.bias_norm[h + 1] / rep.bias_norm[h]));
      // A doubling should shrink the bias by at least e^-1, up to three
      // standard errors of both estimates.
      const double slack = 3.0 * (rep.bias_se[h + 1] + std::exp(-1.0) * rep.bias_se[h]);
      if (rep.bias_norm[h + 1] > std::exp(-1.0) * rep.bias_norm[h] + slack) rep.bias_ok = false;
    }
  }
  return rep;
}

double sampled_second_moment(const GameSpec& game, const JointParams& params, Arm arm, double lambda,
                             const UnrollConfig& cfg, const BatchSpec& batch, int repeats, Stream& stream) {
  if (repeats < 1) throw ContractError("sampled_second_moment: repeats must be at least 1");
  const auto exact = evaluate_field(game, params, cfg, arm, lambda).assembled;
  double total = 0.0;
  for (int r = 0; r < repeats; ++r) {
    const auto e = diff(sampled_update(game, params, arm, lambda, cfg, batch, stream).g, exact);
    total += dot(e, e);
  }
  return total / static_cast<double>(repeats);
}

}  // namespace basinlab
