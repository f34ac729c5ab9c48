#pragma once

#include <functional>
#include <vector>

#include "basinlab/autodiff.hpp"
#include "basinlab/fields.hpp"
#include "basinlab/game.hpp"
#include "basinlab/rng.hpp"

namespace basinlab {

using VectorField = std::function<std::vector<double>(const std::vector<double>&)>;
using JacobianField = std::function<ad::JacobianMatrix(const std::vector<double>&)>;
// Families indexed by the shaping weight lambda.
using FieldFamily = std::function<std::vector<double>(const std::vector<double>&, double)>;
using JacobianFamily = std::function<ad::JacobianMatrix(const std::vector<double>&, double)>;

// Uniform draw from the Euclidean ball of the given radius around `centre`.
std::vector<double> sample_ball(const std::vector<double>& centre, double radius, Stream& stream);

struct MuEstimate {
  double mu = 0.0;
  int samples = 0;
  int violations = 0;  // samples whose ratio is <= 0
};

// min over sampled phi of -<v(phi), phi - eq> / |phi - eq|^2. Requires
// |v(eq)| <= 1e-4.
MuEstimate estimate_mu(const VectorField& v, const std::vector<double>& eq, double radius, int n_samples,
                       Stream& stream);
MuEstimate estimate_mu(const GameSpec& game, const JointParams& eq, double radius, int n_samples, Stream& stream);

// -lambda_max((J + J^T) / 2).
double symmetric_margin(const ad::JacobianMatrix& j);
double estimate_mu_M(const GameSpec& game, const JointParams& eq, const UnrollConfig& cfg, CorrectionPart part);

// Largest singular value.
double operator_norm(const ad::JacobianMatrix& j);

struct NewtonResult {
  std::vector<double> x;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

// Newton on F(x) = 0 with backtracking: the step is halved until the
// residual norm decreases. Converged when |F| <= tol.
NewtonResult damped_newton(const VectorField& f, const JacobianField& jac, std::vector<double> x0,
                           double tol = 1e-10, int max_iter = 200);

struct ShiftPoint {
  double lambda = 0.0;
  std::vector<double> zero;
  std::vector<double> displacement;
  double shift = 0.0;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

struct ShiftReport {
  std::vector<ShiftPoint> points;
  double slope = 0.0;              // least-squares fit of shift = slope * lambda
  double relative_residual = 0.0;  // |shift - slope * lambda| / |shift|
  std::vector<double> implicit_derivative;  // -Dv(eq)^-1 M(eq)
  bool all_converged = true;
};

// Zeros of F(., lambda) near eq for each lambda, found from eq by damped
// Newton. F must be affine in lambda: F(x, l) = v(x) + l * M(x).
ShiftReport verify_fixed_point_shift(const FieldFamily& f, const JacobianFamily& jac, const std::vector<double>& eq,
                                     const std::vector<double>& lambdas);
ShiftReport verify_fixed_point_shift(const GameSpec& game, const JointParams& eq, const UnrollConfig& cfg, Arm arm,
                                     const std::vector<double>& lambdas);

struct DriftReport {
  int samples = 0;
  int violations = 0;
  double worst_margin = 0.0;  // max of lhs - rhs; positive means a violation
  double radius = 0.0;
  double rate = 0.0;          // (mu + lambda mu_M) / 2
};

// Checks <F(phi), phi - c> <= -(mu + lambda mu_M)/2 |phi - c|^2 on the ball.
DriftReport verify_drift(const VectorField& f, const std::vector<double>& centre, double mu, double mu_M,
                         double lambda, double radius, int n_samples, Stream& stream);

struct SOSEstimate {
  std::vector<double> equilibrium;
  double mu = 0.0;
  double mu_M = 0.0;
  double lipschitz = 0.0;

  // (mu + lambda mu_M) / (2 L)
  double radius(double lambda) const;
};

// Max operator norm of the Jacobian over sampled points of the ball.
double local_lipschitz(const JacobianField& jac, const std::vector<double>& centre, double radius, int n_samples,
                       Stream& stream);

struct SaDiagnostics {
  int repeats = 0;
  std::vector<double> noise_mean;
  double noise_mean_norm = 0.0;
  double sigma_hat = 0.0;  // sqrt of the trace of the empirical covariance
  double noise_bound = 0.0;  // 3 sigma_hat / sqrt(repeats)
  bool noise_ok = false;
  double second_moment = 0.0;  // mean |g - F|^2

  std::vector<int> horizons;
  std::vector<double> bias_norm;
  std::vector<double> bias_se;
  std::vector<double> log_ratio;  // log(bias(H_{k+1}) / bias(H_k))
  bool bias_ok = false;
};

// Noise mean, covariance trace and the truncation-bias curve of the sampled
// estimator at `params`. The bias curve uses the v estimator on shared
// prefixes of one batch per repeat, sampled at the largest horizon.
SaDiagnostics sa_diagnostics(const GameSpec& game, const JointParams& params, Arm arm, double lambda,
                             const UnrollConfig& cfg, const BatchSpec& batch, int repeats,
                             const std::vector<int>& bias_horizons, Stream& stream);

// Mean |g - F|^2 of the sampled update (second-moment diagnostic).
double sampled_second_moment(const GameSpec& game, const JointParams& params, Arm arm, double lambda,
                             const UnrollConfig& cfg, const BatchSpec& batch, int repeats, Stream& stream);

}  // namespace basinlab
