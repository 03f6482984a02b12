#include "gasflow/error.hpp"
#include "gasflow/stochastic.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace gasflow;
using namespace gasflow::oracle;

TEST_CASE("uniform cell masses") {
  const StochasticGrid g = build_grid(UncertaintySpec::uniform(200.0, 300.0), 100);
  REQUIRE(g.cell_mass().size() == 100);
  double total = 0.0;
  for (double m : g.cell_mass()) {
    CHECK(m == doctest::Approx(0.01).epsilon(1e-14));
    total += m;
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
  CHECK(g.knots().front() == 200.0);
  CHECK(g.knots().back() == 300.0);
  CHECK(g.centers()[0] == doctest::Approx(200.5));

  const StochasticGrid g2 = build_grid(UncertaintySpec::uniform(0.0, 32.0), 50);
  for (double m : g2.cell_mass()) CHECK(m == doctest::Approx(0.02).epsilon(1e-14));
}

TEST_CASE("truncated normal cell masses are symmetric") {
  const StochasticGrid g = build_grid(UncertaintySpec::truncated_normal(250.0, 50.0 / 3.0, 200.0, 300.0), 4);
  const auto& m = g.cell_mass();
  CHECK(m[0] == doctest::Approx(m[3]).epsilon(1e-12));
  CHECK(m[1] == doctest::Approx(m[2]).epsilon(1e-12));
  CHECK(m[1] > m[0]);
  CHECK(std::abs(m[0] + m[1] + m[2] + m[3] - 1.0) <= 1e-12);
}

TEST_CASE("basis is a partition of unity") {
  for (int k : {4, 7, 50, 100}) {
    const StochasticGrid g = build_grid(UncertaintySpec::uniform(-50.0, 50.0), k);
    CHECK(g.basis().size() == k + 3);
    for (int i = 0; i <= 1000; ++i) {
      const double omega = -50.0 + 100.0 * i / 1000.0;
      CHECK(std::abs(g.basis_values(omega).sum() - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("basis values agree with the Cox-de Boor recursion") {
  const CubicBSpline b = CubicBSpline::clamped_uniform(0.0, 1.0, 9);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 200; ++s) {
    const double x = u(rng);
    const Eigen::VectorXd v = b.values(x);
    for (int m = 0; m < b.size(); ++m) CHECK(std::abs(v(m) - cox_de_boor(b.knots(), m, 3, x)) <= 1e-14);
  }
}

TEST_CASE("basis integrals match a high resolution oracle") {
  const std::vector<UncertaintySpec> specs = {
      UncertaintySpec::uniform(200.0, 300.0),
      UncertaintySpec::truncated_normal(250.0, 50.0 / 3.0, 200.0, 300.0),
      UncertaintySpec::truncated_normal(10.0, 20.0, -50.0, 50.0),
  };
  for (const auto& spec : specs) {
    for (int k : {4, 10, 100}) {
      const StochasticGrid g = build_grid(spec, k);
      const auto oracle = oracle_integrals(g);
      const Eigen::VectorXd& ints = g.basis_integrals();
      double sum = 0.0;
      for (int m = 0; m < ints.size(); ++m) {
        CHECK(ints(m) >= 0.0);
        CHECK(std::abs(ints(m) - oracle[static_cast<std::size_t>(m)]) <=
              1e-8 * std::abs(oracle[static_cast<std::size_t>(m)]));
        sum += ints(m);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("uniform interior integral equals the basis L1 norm over the width") {
  const StochasticGrid g = build_grid(UncertaintySpec::uniform(200.0, 300.0), 20);
  // Interior cubic B-spline on a uniform mesh has unit-coordinate integral h = 1/K.
  CHECK(g.basis_integrals()(10) == doctest::Approx(1.0 / 20.0).epsilon(1e-13));
}

TEST_CASE("truncated normal puts less weight on edge functions") {
  const StochasticGrid g = build_grid(UncertaintySpec::truncated_normal(250.0, 50.0 / 3.0, 200.0, 300.0), 10);
  const auto& ints = g.basis_integrals();
  CHECK(ints(0) < ints(6));
  CHECK(ints(ints.size() - 1) < ints(6));
}

TEST_CASE("integrals are translation covariant") {
  const StochasticGrid a = build_grid(UncertaintySpec::truncated_normal(0.0, 50.0 / 3.0, -50.0, 50.0), 12);
  const StochasticGrid b = build_grid(UncertaintySpec::truncated_normal(250.0, 50.0 / 3.0, 200.0, 300.0), 12);
  const StochasticGrid c = build_grid(UncertaintySpec::uniform(-50.0, 50.0), 12);
  const StochasticGrid d = build_grid(UncertaintySpec::uniform(200.0, 300.0), 12);
  CHECK((a.basis_integrals() - b.basis_integrals()).lpNorm<Eigen::Infinity>() <= 1e-13);
  CHECK((c.basis_integrals() - d.basis_integrals()).lpNorm<Eigen::Infinity>() <= 1e-13);
}

TEST_CASE("spline interpolation reproduces cubics") {
  auto cubic = [](double x) { return 2.0 - 0.3 * x + 0.01 * x * x - 4e-4 * x * x * x; };
  const StochasticGrid g = build_grid(UncertaintySpec::uniform(-50.0, 50.0), 9);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::vector<double> pts(100);
  for (double& p : pts) p = u(rng);

  // Through the cell centres.
  const Eigen::MatrixXd s = g.cell_interpolation(pts);
  Eigen::VectorXd at_centers(g.cells());
  for (int k = 0; k < g.cells(); ++k) at_centers(k) = cubic(g.centers()[static_cast<std::size_t>(k)]);
  const Eigen::VectorXd interp = s * at_centers;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(std::abs(interp(static_cast<Eigen::Index>(i)) - cubic(pts[i])) <= 1e-10);
  }

  // Clamped basis collocated at the Greville abscissae.
  const auto gre = g.greville();
  Eigen::MatrixXd b(gre.size(), gre.size());
  Eigen::VectorXd rhs(gre.size());
  for (std::size_t i = 0; i < gre.size(); ++i) {
    b.row(static_cast<Eigen::Index>(i)) = g.basis_values(gre[i]).transpose();
    rhs(static_cast<Eigen::Index>(i)) = cubic(gre[i]);
  }
  const Eigen::VectorXd coef = b.partialPivLu().solve(rhs);
  for (double p : pts) CHECK(std::abs(g.basis_values(p).dot(coef) - cubic(p)) <= 1e-10);
}

TEST_CASE("gauss legendre is exact for polynomials of degree 2n-1") {
  const QuadratureRule q = gauss_legendre(5);
  double s = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * std::pow(q.nodes[i], 8);
  CHECK(s == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("inverse cdf samples") {
  CHECK(sample_value(UncertaintySpec::uniform(200.0, 300.0), 0.5) == doctest::Approx(250.0));
  CHECK(std::abs(sample_value(UncertaintySpec::truncated_normal(0.0, 50.0 / 3.0, -50.0, 50.0), 0.5)) <= 1e-10);
  CHECK(sample_value(UncertaintySpec::uniform(0.0, 32.0), 1.0) == 32.0);
  const auto tn = UncertaintySpec::truncated_normal(0.0, 50.0 / 3.0, -50.0, 50.0);
  CHECK(sample_value(tn, 0.0) == -50.0);
  CHECK(sample_value(tn, 1.0) == 50.0);
  CHECK(tn.cdf(sample_value(tn, 0.3)) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("sample mean matches the analytic mean") {
  const UncertaintySpec spec = UncertaintySpec::truncated_normal(10.0, 20.0, -50.0, 50.0);
  const double a = (-50.0 - 10.0) / 20.0;
  const double b = (50.0 - 10.0) / 20.0;
  auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
  const double z = normal_cdf(b) - normal_cdf(a);
  const double mean = 10.0 + 20.0 * (phi(a) - phi(b)) / z;
  CHECK(spec.expected_value() == doctest::Approx(mean).epsilon(1e-12));

  for (const auto& s : {spec, UncertaintySpec::uniform(0.0, 32.0)}) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 100000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = sample_value(s, u(rng));
      sum += v;
      sq += v * v;
    }
    const double m = sum / n;
    const double se = std::sqrt((sq / n - m * m) / n);
    CHECK(std::abs(m - s.expected_value()) <= 3.0 * se);
  }
}

TEST_CASE("grid construction errors") {
  CHECK_THROWS_AS(build_grid(UncertaintySpec::uniform(0.0, 1.0), 3), Error);
  CHECK_THROWS_AS(build_grid(UncertaintySpec::uniform(1.0, 1.0), 10), Error);
  CHECK_THROWS_AS(build_grid(UncertaintySpec::uniform(2.0, 1.0), 10), Error);
  CHECK_THROWS_AS(build_grid(UncertaintySpec::truncated_normal(0.0, -1.0, -1.0, 1.0), 10), Error);
}

TEST_CASE("point grid concentrates every cell on one value") {
  const StochasticGrid g = build_point_grid(7.5, 4);
  CHECK(g.degenerate());
  for (double c : g.centers()) CHECK(c == 7.5);
  for (double m : g.cell_mass()) CHECK(m == 0.25);
  CHECK(g.expected_value() == 7.5);
  CHECK(std::abs(g.basis_integrals().sum() - 1.0) <= 1e-12);
}
