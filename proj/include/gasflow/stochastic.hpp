#pragma once

#include "gasflow/network.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace gasflow {

/// Cubic B-spline basis over a knot vector with fourfold end knots.
///
/// Evaluation outside [lower(), upper()] continues the polynomial piece of the
/// nearest end span, which is what interpolation at slightly exterior points needs.
class CubicBSpline {
 public:
  static constexpr int kDegree = 3;

  explicit CubicBSpline(std::vector<double> knots);

  /// Clamped basis with `cells` uniform spans on [a, b]; cells + 3 functions.
  static CubicBSpline clamped_uniform(double a, double b, int cells);
  /// Basis whose interpolation at `sites` is the not-a-knot cubic spline; sites.size() functions.
  static CubicBSpline not_a_knot(std::span<const double> sites);

  int size() const { return static_cast<int>(knots_.size()) - kDegree - 1; }
  double lower() const { return knots_[kDegree]; }
  double upper() const { return knots_[knots_.size() - kDegree - 1]; }
  const std::vector<double>& knots() const { return knots_; }

  /// Greville abscissae, one per basis function.
  std::vector<double> greville() const;

  /// Values of the four functions that may be non-zero at x; returns the index of the first.
  int evaluate(double x, std::array<double, 4>& values) const;
  Eigen::VectorXd values(double x) const;
  /// Rows: points, columns: basis functions.
  Eigen::MatrixXd collocation_matrix(std::span<const double> points) const;

 private:
  int find_span(double x) const;

  std::vector<double> knots_;
};

/// Linear map taking values at `sites` to values of their not-a-knot cubic interpolant at
/// `points` (points.size() x sites.size()). Requires at least four strictly increasing sites.
Eigen::MatrixXd spline_interpolation_matrix(std::span<const double> sites,
                                            std::span<const double> points);

/// Gauss-Legendre nodes and weights on [-1, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
QuadratureRule gauss_legendre(int points);

/// Stochastic finite volume discretisation of a 1-D withdrawal uncertainty.
///
/// Cells uniformly partition [lo, hi]. The spline basis lives on the unit coordinate
/// t = (omega - lo) / (hi - lo) so that a zero-width interval (a point mass) remains
/// representable: every cell then maps to the same omega and carries mass 1/K.
class StochasticGrid {
 public:
  StochasticGrid(std::string node_id, UncertaintySpec spec, int cells, bool point_mass);

  const std::string& node_id() const { return node_id_; }
  const UncertaintySpec& spec() const { return spec_; }
  int cells() const { return cells_; }
  bool degenerate() const { return point_mass_; }
  double lo() const { return spec_.lo; }
  double hi() const { return spec_.hi; }

  /// K + 1 cell boundaries in omega.
  const std::vector<double>& knots() const { return knots_; }
  /// K cell centres in omega: the physics collocation points.
  const std::vector<double>& centers() const { return centers_; }
  /// Cell centres on the unit coordinate.
  const std::vector<double>& centers_unit() const { return centers_unit_; }
  const std::vector<double>& cell_mass() const { return mass_; }

  /// Cubic basis on the unit interval, K + 3 functions.
  const CubicBSpline& basis() const { return basis_; }
  const Eigen::VectorXd& basis_integrals() const { return integrals_; }
  /// K + 3 Greville abscissae on the unit coordinate, and mapped to omega.
  const std::vector<double>& greville_unit() const { return greville_unit_; }
  std::vector<double> greville() const;

  double to_unit(double omega) const;
  double to_omega(double t) const;
  /// Measure density with respect to the unit coordinate.
  double unit_density(double t) const;
  /// All basis functions evaluated at omega.
  Eigen::VectorXd basis_values(double omega) const;
  /// Exact mean of the withdrawal offset.
  double expected_value() const;
  /// Map from per-cell values to the cubic interpolant through the cell centres at omegas.
  Eigen::MatrixXd cell_interpolation(std::span<const double> omegas) const;

 private:
  std::string node_id_;
  UncertaintySpec spec_;
  int cells_;
  bool point_mass_;
  std::vector<double> knots_;
  std::vector<double> centers_;
  std::vector<double> centers_unit_;
  std::vector<double> mass_;
  CubicBSpline basis_;
  std::vector<double> greville_unit_;
  Eigen::VectorXd integrals_;
};

inline constexpr int kMinCells = 4;

/// Build a grid of `cells` uniform cells on [spec.lo, spec.hi]. Requires cells >= 4, lo < hi.
StochasticGrid build_grid(const UncertaintySpec& spec, int cells, std::string node_id = {});

/// Zero-width grid: the withdrawal offset is the constant `value`.
StochasticGrid build_point_grid(double value, int cells, std::string node_id = {});

/// Integral of each basis function against the grid's probability measure, computed by
/// Gauss-Legendre quadrature on every knot span.
Eigen::VectorXd basis_integrals(const StochasticGrid& grid, int points_per_span = 8);

/// Inverse-CDF sample of the withdrawal offset for a uniform(0,1) draw u.
double sample_value(const UncertaintySpec& spec, double u);

}  // namespace gasflow
