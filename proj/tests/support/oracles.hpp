#pragma once

#include "gasflow/nlp.hpp"
#include "gasflow/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace gasflow::oracle {

// Cox-de Boor recursion, kept separate from the library's evaluator.
inline double cox_de_boor(const std::vector<double>& t, int i, int p, double x) {
  if (p == 0) {
    const bool last = t[i + 1] == t.back() && x == t.back() && t[i] < t[i + 1];
    return (t[i] <= x && x < t[i + 1]) || last ? 1.0 : 0.0;
  }
  double v = 0.0;
  if (t[i + p] > t[i]) v += (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x);
  if (t[i + p + 1] > t[i + 1]) {
    v += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x);
  }
  return v;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double oracle_density(const UncertaintySpec& s, double omega) {
  if (s.dist == Distribution::Uniform) return 1.0 / (s.hi - s.lo);
  const double z = normal_cdf((s.hi - s.mean) / s.std) - normal_cdf((s.lo - s.mean) / s.std);
  const double u = (omega - s.mean) / s.std;
  return std::exp(-0.5 * u * u) / (s.std * std::sqrt(2.0 * std::numbers::pi)) / z;
}

// Composite Simpson, fine enough that its own error is far below the tolerance.
inline std::vector<double> oracle_integrals(const StochasticGrid& g) {
  const auto& t = g.basis().knots();
  const int nb = g.basis().size();
  std::vector<double> out(static_cast<std::size_t>(nb), 0.0);
  const int sub = 1000;
  for (int k = 0; k < g.cells(); ++k) {
    const double a = static_cast<double>(k) / g.cells();
    const double b = static_cast<double>(k + 1) / g.cells();
    const double h = (b - a) / sub;
    for (int j = 0; j <= sub; ++j) {
      const double x = a + j * h;
      const double w = (j == 0 || j == sub) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
      const double omega = g.lo() + x * (g.hi() - g.lo());
      const double rho = oracle_density(g.spec(), omega) * (g.hi() - g.lo());
      // Evaluate from the interior of the span to avoid half-open interval ambiguity.
      const double xe = std::clamp(x, a + 1e-15, b - 1e-15);
      for (int m = k; m < std::min(nb, k + 4); ++m) {
        out[static_cast<std::size_t>(m)] += w * h / 3.0 * rho * cox_de_boor(t, m, 3, xe);
      }
    }
  }
  return out;
}

constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline SparseMatrix dense_to_sparse(const Eigen::MatrixXd& m) { return m.sparseView(0.0, 0.0); }

inline NlpProblem box_qp() {
  NlpProblem p;
  p.num_variables = 1;
  p.lower = Vector::Constant(1, 1.0);
  p.upper = Vector::Constant(1, kInfinity);
  p.objective = [](const Vector& x) { return x(0) * x(0); };
  p.gradient = [](const Vector& x) { return Vector::Constant(1, 2.0 * x(0)); };
  p.hessian = [](const Vector&, double sigma, const Vector&) {
    return dense_to_sparse(Eigen::MatrixXd::Constant(1, 1, 2.0 * sigma));
  };
  return p;
}

// min -(c1 x1 + c2 x2)  s.t.  sign * (x1 + x2 - q) = 0,  0 <= x <= u
inline NlpProblem bounded_lp(double c1, double c2, double u1, double u2, double q, double sign) {
  NlpProblem p;
  p.num_variables = 2;
  p.num_constraints = 1;
  p.lower = Vector::Zero(2);
  p.upper = Vector(2);
  p.upper << u1, u2;
  p.objective = [=](const Vector& x) { return -(c1 * x(0) + c2 * x(1)); };
  p.gradient = [=](const Vector&) {
    Vector g(2);
    g << -c1, -c2;
    return g;
  };
  p.constraints = [=](const Vector& x) { return Vector::Constant(1, sign * (x(0) + x(1) - q)); };
  p.jacobian = [=](const Vector&) {
    Eigen::MatrixXd j(1, 2);
    j << sign, sign;
    return dense_to_sparse(j);
  };
  p.hessian = [](const Vector&, double, const Vector&) { return SparseMatrix(2, 2); };
  return p;
}

// Rosenbrock restricted to x1 + x2 = 1, objective multiplied by `scale`.
inline NlpProblem rosenbrock(double scale, bool exact_hessian) {
  NlpProblem p;
  p.num_variables = 2;
  p.num_constraints = 1;
  p.lower = Vector::Constant(2, -kInfinity);
  p.upper = Vector::Constant(2, kInfinity);
  p.objective = [=](const Vector& x) {
    return scale * ((1 - x(0)) * (1 - x(0)) + 100 * std::pow(x(1) - x(0) * x(0), 2));
  };
  p.gradient = [=](const Vector& x) {
    Vector g(2);
    g << scale * (-2 * (1 - x(0)) - 400 * x(0) * (x(1) - x(0) * x(0))),
        scale * 200 * (x(1) - x(0) * x(0));
    return g;
  };
  p.constraints = [](const Vector& x) { return Vector::Constant(1, x(0) + x(1) - 1.0); };
  p.jacobian = [](const Vector&) {
    Eigen::MatrixXd j(1, 2);
    j << 1.0, 1.0;
    return dense_to_sparse(j);
  };
  if (exact_hessian) {
    p.hessian = [=](const Vector& x, double sigma, const Vector&) {
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 2);
      h(0, 0) = sigma * scale * (2 - 400 * (x(1) - x(0) * x(0)) + 800 * x(0) * x(0));
      h(1, 0) = sigma * scale * (-400 * x(0));
      h(1, 1) = sigma * scale * 200;
      return dense_to_sparse(h);
    };
  }
  return p;
}

// Reference minimiser from a 40-digit root of the reduced one-dimensional derivative.
constexpr double kRosenX1 = 0.61879561907502540132;
constexpr double kRosenX2 = 0.38120438092497459868;
constexpr double kRosenLambda = 0.34072745229386832701;

}  // namespace gasflow::oracle
