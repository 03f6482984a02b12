#include "gasflow/stochastic.hpp"

#include "gasflow/error.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gasflow {

namespace {

constexpr const char* kModule = "stochastic_space";

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

struct Standardized {
  double a, b, z;
};

Standardized standardize(const UncertaintySpec& s) {
  const double a = (s.lo - s.mean) / s.std;
  const double b = (s.hi - s.mean) / s.std;
  return {a, b, std_normal_cdf(b) - std_normal_cdf(a)};
}

}  // namespace

// --- UncertaintySpec ---------------------------------------------------------

double UncertaintySpec::cdf(double r) const {
  if (r <= lo) return 0.0;
  if (r >= hi) return 1.0;
  if (dist == Distribution::Uniform) return (r - lo) / (hi - lo);
  const auto [a, b, z] = standardize(*this);
  return (std_normal_cdf((r - mean) / std) - std_normal_cdf(a)) / z;
}

double UncertaintySpec::pdf(double r) const {
  if (r < lo || r > hi) return 0.0;
  if (dist == Distribution::Uniform) return 1.0 / (hi - lo);
  const auto [a, b, z] = standardize(*this);
  return std_normal_pdf((r - mean) / std) / (std * z);
}

double UncertaintySpec::expected_value() const {
  if (dist == Distribution::Uniform) return 0.5 * (lo + hi);
  const auto [a, b, z] = standardize(*this);
  return mean + std * (std_normal_pdf(a) - std_normal_pdf(b)) / z;
}

double UncertaintySpec::variance() const {
  if (dist == Distribution::Uniform) return (hi - lo) * (hi - lo) / 12.0;
  const auto [a, b, z] = standardize(*this);
  const double pa = std_normal_pdf(a);
  const double pb = std_normal_pdf(b);
  const double shift = (pa - pb) / z;
  return std * std * (1.0 + (a * pa - b * pb) / z - shift * shift);
}

double sample_value(const UncertaintySpec& spec, double u) {
  u = std::clamp(u, 0.0, 1.0);
  if (spec.dist == Distribution::Uniform) return spec.lo + u * (spec.hi - spec.lo);
  if (u == 0.0) return spec.lo;
  if (u == 1.0) return spec.hi;
  const auto [a, b, z] = standardize(spec);
  const double p = std_normal_cdf(a) + u * z;
  // Phi^{-1}(p) = -sqrt(2) erfc^{-1}(2p)
  const double x = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
  return std::clamp(spec.mean + spec.std * x, spec.lo, spec.hi);
}

// --- CubicBSpline ------------------------------------------------------------

CubicBSpline::CubicBSpline(std::vector<double> knots) : knots_(std::move(knots)) {
  if (knots_.size() < 8) throw input_error(kModule, "", "cubic basis needs at least 8 knots");
  if (!std::is_sorted(knots_.begin(), knots_.end())) {
    throw input_error(kModule, "", "knot vector must be non-decreasing");
  }
  if (!(upper() > lower())) throw input_error(kModule, "", "knot vector spans an empty interval");
}

CubicBSpline CubicBSpline::clamped_uniform(double a, double b, int cells) {
  std::vector<double> t;
  t.reserve(static_cast<std::size_t>(cells) + 7);
  for (int i = 0; i < kDegree; ++i) t.push_back(a);
  for (int i = 0; i <= cells; ++i) {
    t.push_back(i == cells ? b : a + (b - a) * static_cast<double>(i) / cells);
  }
  for (int i = 0; i < kDegree; ++i) t.push_back(b);
  return CubicBSpline(std::move(t));
}

CubicBSpline CubicBSpline::not_a_knot(std::span<const double> sites) {
  const std::size_t n = sites.size();
  if (n < 4) throw input_error(kModule, "", "not-a-knot interpolation needs at least 4 sites");
  std::vector<double> t(4, sites.front());
  // Interior knots at every site except the second and the second to last.
  for (std::size_t i = 2; i + 2 < n; ++i) t.push_back(sites[i]);
  t.insert(t.end(), 4, sites.back());
  return CubicBSpline(std::move(t));
}

std::vector<double> CubicBSpline::greville() const {
  std::vector<double> g(static_cast<std::size_t>(size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = (knots_[i + 1] + knots_[i + 2] + knots_[i + 3]) / 3.0;
  }
  return g;
}

int CubicBSpline::find_span(double x) const {
  const int n = size();
  if (x >= knots_[static_cast<std::size_t>(n)]) return n - 1;
  if (x <= knots_[kDegree]) return kDegree;
  auto it = std::upper_bound(knots_.begin() + kDegree, knots_.begin() + n + 1, x);
  return static_cast<int>(it - knots_.begin()) - 1;
}

int CubicBSpline::evaluate(double x, std::array<double, 4>& values) const {
  const int span = find_span(x);
  std::array<double, kDegree + 1> left{};
  std::array<double, kDegree + 1> right{};
  values[0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = x - knots_[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots_[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = values[r] / (right[r + 1] + left[j - r]);
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
  return span - kDegree;
}

Eigen::VectorXd CubicBSpline::values(double x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  std::array<double, 4> v{};
  const int first = evaluate(x, v);
  for (int j = 0; j < 4; ++j) out(first + j) = v[j];
  return out;
}

Eigen::MatrixXd CubicBSpline::collocation_matrix(std::span<const double> points) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), size());
  std::array<double, 4> v{};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int first = evaluate(points[i], v);
    for (int j = 0; j < 4; ++j) out(static_cast<Eigen::Index>(i), first + j) = v[j];
  }
  return out;
}

Eigen::MatrixXd spline_interpolation_matrix(std::span<const double> sites,
                                            std::span<const double> points) {
  for (std::size_t i = 1; i < sites.size(); ++i) {
    if (!(sites[i] > sites[i - 1])) {
      throw input_error(kModule, "", "interpolation sites must be strictly increasing");
    }
  }
  const CubicBSpline basis = CubicBSpline::not_a_knot(sites);
  const Eigen::MatrixXd at_sites = basis.collocation_matrix(sites);
  const Eigen::MatrixXd at_points = basis.collocation_matrix(points);
  // E C^{-1} == (C^{-T} E^T)^T
  return at_sites.transpose().partialPivLu().solve(at_points.transpose()).transpose();
}

QuadratureRule gauss_legendre(int points) {
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(points));
  rule.weights.resize(static_cast<std::size_t>(points));
  for (int i = 0; i < (points + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= points; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = points * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(points - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(points - 1 - i)] = w;
  }
  return rule;
}

// --- StochasticGrid ----------------------------------------------------------

StochasticGrid::StochasticGrid(std::string node_id, UncertaintySpec spec, int cells,
                               bool point_mass)
    : node_id_(std::move(node_id)),
      spec_(spec),
      cells_(cells),
      point_mass_(point_mass),
      basis_(CubicBSpline::clamped_uniform(0.0, 1.0, std::max(cells, 1))) {
  if (cells < kMinCells) {
    throw input_error(kModule, node_id_, "at least " + std::to_string(kMinCells) +
                                             " cells are needed for the cubic basis");
  }
  if (!point_mass_) {
    if (!(spec_.lo < spec_.hi)) {
      throw input_error(kModule, node_id_, "degenerate uncertainty interval (hi <= lo)");
    }
    if (spec_.dist == Distribution::TruncatedNormal && !(spec_.std > 0.0)) {
      throw input_error(kModule, node_id_, "truncated normal std must be positive");
    }
  }
  const auto k = static_cast<std::size_t>(cells);
  knots_.resize(k + 1);
  for (std::size_t i = 0; i <= k; ++i) knots_[i] = to_omega(static_cast<double>(i) / cells);
  centers_.resize(k);
  centers_unit_.resize(k);
  mass_.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    centers_unit_[i] = (static_cast<double>(i) + 0.5) / cells;
    centers_[i] = to_omega(centers_unit_[i]);
    if (point_mass_ || spec_.dist == Distribution::Uniform) {
      mass_[i] = 1.0 / cells;
    } else {
      mass_[i] = spec_.cdf(knots_[i + 1]) - spec_.cdf(knots_[i]);
    }
  }
  greville_unit_ = basis_.greville();
  integrals_ = gasflow::basis_integrals(*this);
}

double StochasticGrid::to_unit(double omega) const {
  if (point_mass_) return 0.5;
  return (omega - spec_.lo) / (spec_.hi - spec_.lo);
}

double StochasticGrid::to_omega(double t) const {
  if (point_mass_) return spec_.lo;
  return spec_.lo + t * (spec_.hi - spec_.lo);
}

double StochasticGrid::unit_density(double t) const {
  if (point_mass_ || spec_.dist == Distribution::Uniform) return (t >= 0.0 && t <= 1.0) ? 1.0 : 0.0;
  return spec_.pdf(to_omega(t)) * (spec_.hi - spec_.lo);
}

std::vector<double> StochasticGrid::greville() const {
  std::vector<double> out(greville_unit_.size());
  std::transform(greville_unit_.begin(), greville_unit_.end(), out.begin(),
                 [this](double t) { return to_omega(t); });
  return out;
}

Eigen::VectorXd StochasticGrid::basis_values(double omega) const {
  return basis_.values(to_unit(omega));
}

double StochasticGrid::expected_value() const {
  return point_mass_ ? spec_.lo : spec_.expected_value();
}

Eigen::MatrixXd StochasticGrid::cell_interpolation(std::span<const double> omegas) const {
  std::vector<double> t(omegas.size());
  std::transform(omegas.begin(), omegas.end(), t.begin(), [this](double w) { return to_unit(w); });
  return spline_interpolation_matrix(centers_unit_, t);
}

StochasticGrid build_grid(const UncertaintySpec& spec, int cells, std::string node_id) {
  return StochasticGrid(std::move(node_id), spec, cells, false);
}

StochasticGrid build_point_grid(double value, int cells, std::string node_id) {
  return StochasticGrid(std::move(node_id), UncertaintySpec::uniform(value, value), cells, true);
}

Eigen::VectorXd basis_integrals(const StochasticGrid& grid, int points_per_span) {
  const CubicBSpline& basis = grid.basis();
  const QuadratureRule rule = gauss_legendre(points_per_span);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.size());
  const auto& t = basis.knots();
  std::array<double, 4> v{};
  for (std::size_t s = 0; s + 1 < t.size(); ++s) {
    const double a = t[s];
    const double b = t[s + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double x = a + half * (rule.nodes[q] + 1.0);
      const double w = half * rule.weights[q] * grid.unit_density(x);
      const int first = basis.evaluate(x, v);
      for (int j = 0; j < 4; ++j) out(first + j) += w * v[j];
    }
  }
  return out;
}

}  // namespace gasflow
