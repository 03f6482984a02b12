#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <functional>
#include <optional>
#include <string>

namespace gasflow {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Smooth problem  min f(x)  s.t.  c(x) = 0,  lower <= x <= upper.
///
/// Multiplier convention used throughout:
///   L(x, y, z_lo, z_hi) = f(x) + y^T c(x) - z_lo^T (x - lower) - z_hi^T (upper - x)
/// with z_lo, z_hi >= 0. Infinite bounds carry zero multipliers.
struct NlpProblem {
  int num_variables = 0;
  int num_constraints = 0;
  Vector lower;
  Vector upper;
  std::function<double(const Vector&)> objective;
  std::function<Vector(const Vector&)> gradient;
  std::function<Vector(const Vector&)> constraints;
  /// m x n, with a sparsity pattern that does not depend on x.
  std::function<SparseMatrix(const Vector&)> jacobian;
  /// Optional Hessian of sigma * f + y^T c. Only entries with row >= col are read.
  /// When empty, a damped BFGS approximation is used instead.
  std::function<SparseMatrix(const Vector& x, double sigma, const Vector& y)> hessian;
};

enum class NlpStatus { Optimal, MaxIter, Infeasible };

const char* to_string(NlpStatus status);

struct KktResiduals {
  double stationarity = 0.0;     // ||grad f + J^T y - z_lo + z_hi||_inf
  double feasibility = 0.0;      // ||c||_inf
  double complementarity = 0.0;  // max_i z_i * slack_i
  double scaled_error = 0.0;     // convergence measure after multiplier-size scaling
};

struct NlpSolution {
  Vector x;
  Vector lambda_eq;
  Vector lambda_lo;
  Vector lambda_hi;
  NlpStatus status = NlpStatus::MaxIter;
  KktResiduals kkt;
  double objective = 0.0;
  int iterations = 0;
  std::string message;
};

/// Multipliers to start from, e.g. a previous solution of a nearby problem.
struct WarmStart {
  Vector lambda_eq;
  Vector lambda_lo;
  Vector lambda_hi;
};

struct NlpOptions {
  double tolerance = 1e-8;
  int max_iterations = 3000;
  double mu_init = 0.1;
  /// Minimum absolute/relative distance the initial point keeps from its bounds.
  double bound_push = 1e-2;
  double bound_frac = 1e-2;
  std::optional<WarmStart> warm_start;
};

/// Primal-dual interior-point method with filter line search and inertia correction.
NlpSolution solve(const NlpProblem& problem, const Vector& x0, const NlpOptions& options = {});

/// Largest relative discrepancy between analytic first derivatives (gradient and Jacobian)
/// and central differences with step 1e-6 * (1 + |x_i|), rounded to a power of two.
double check_derivatives(const NlpProblem& problem, const Vector& x);

/// KKT residuals of an arbitrary primal-dual point.
KktResiduals kkt_residuals(const NlpProblem& problem, const Vector& x, const Vector& lambda_eq,
                           const Vector& lambda_lo, const Vector& lambda_hi);

}  // namespace gasflow
