#include "gasflow/error.hpp"
#include "gasflow/pricing.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace gasflow;

namespace {

NetworkSpec config_spec(const char* name) {
  return load_network(std::string(GASFLOW_CONFIG_DIR) + "/" + name).spec();
}

Node& node(NetworkSpec& spec, const std::string& id) {
  return *std::find_if(spec.nodes.begin(), spec.nodes.end(), [&](const Node& n) { return n.id == id; });
}

OgfOptions with_gamma(double gamma, bool recourse = true) {
  OgfOptions o;
  o.penalty.gamma = gamma;
  o.recourse_nominations = recourse;
  return o;
}

Network single_pipe(double epsilon, double alpha_max = 1.4) {
  NetworkSpec spec = config_spec("single_pipe.json");
  node(spec, "N3").epsilon = epsilon;
  spec.compressors[0].alpha_max = alpha_max;
  return Network(spec);
}

Network eight_node(double qmax) {
  NetworkSpec spec = config_spec("eight_node.json");
  node(spec, "J3").demand_max = qmax;
  return Network(spec);
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

}  // namespace

TEST_CASE("selector parsing") {
  const Selector s = Selector::parse("pressure@N3");
  CHECK(s.quantity == Selector::Quantity::Pressure);
  CHECK(s.id == "N3");
  CHECK(s.str() == "pressure@N3");
  for (const char* text : {"flow@P1", "lambda_q@J5", "lambda_d@J3", "d@J3"}) {
    CHECK(Selector::parse(text).str() == text);
  }
  for (const char* bad : {"pressure", "@N3", "pressure@", "speed@N3"}) {
    CHECK_THROWS_AS(Selector::parse(bad), Error);
  }
}

TEST_CASE("unknown selector ids name the entity") {
  const Network net = single_pipe(0.05);
  const CcSolution sol = solve_chance_constrained(net, grid_for(net, 8), with_gamma(1000.0));
  try {
    cell_values(sol, net, Selector::parse("pressure@NX"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.module() == "pricing_stats");
    CHECK(e.entity() == "node NX");
  }
  try {
    cell_values(sol, net, Selector::parse("flow@N3"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.entity() == "edge N3");
  }
}

TEST_CASE("constant cell values give a point mass and a density peaked at it") {
  const Network net = single_pipe(0.05);
  const StochasticGrid grid = grid_for(net, 12);
  CcSolution sol = solve_chance_constrained(net, grid, with_gamma(1000.0));
  REQUIRE(sol.status == NlpStatus::Optimal);
  const double v = 4.5e6;
  for (CellSolution& c : sol.cells) c.pi[2] = v * v;

  const ValueDistribution dist = distribution_of(sol, net, Selector::parse("pressure@N3"), grid);
  for (double x : dist.support) CHECK(x == doctest::Approx(v).epsilon(1e-14));
  CHECK(dist.mean() == doctest::Approx(v).epsilon(1e-12));
  REQUIRE(dist.bandwidth > 0.0);
  const auto peak = std::max_element(dist.density.begin(), dist.density.end()) - dist.density.begin();
  CHECK(std::abs(dist.grid[static_cast<std::size_t>(peak)] - v) <= dist.bandwidth);
  CHECK(trapezoid(dist.grid, dist.density) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("densities integrate to one and the discrete mean is mass weighted") {
  const Network net = single_pipe(0.05);
  const StochasticGrid grid = grid_for(net, 20);
  const CcSolution sol = solve_chance_constrained(net, grid, with_gamma(1000.0));
  REQUIRE(sol.status == NlpStatus::Optimal);
  for (const char* sel : {"pressure@N3", "flow@P1", "lambda_q@N3"}) {
    CAPTURE(sel);
    const ValueDistribution dist = distribution_of(sol, net, Selector::parse(sel), grid);
    REQUIRE(dist.grid.size() >= 512);
    CHECK(std::is_sorted(dist.grid.begin(), dist.grid.end()));
    CHECK(trapezoid(dist.grid, dist.density) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(std::accumulate(dist.mass.begin(), dist.mass.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    double mean = 0.0;
    for (std::size_t k = 0; k < dist.support.size(); ++k) mean += dist.mass[k] * dist.support[k];
    CHECK(dist.mean() == doctest::Approx(mean).epsilon(1e-14));
  }

  const ValueDistribution discrete =
      distribution_of(sol, net, Selector::parse("pressure@N3"), grid, DensityOptions{0, 512});
  CHECK(discrete.grid.empty());
  CHECK(discrete.support.size() == 20);
}

TEST_CASE("silverman bandwidth of a known sample") {
  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
  // sd = sqrt(2.5) exceeds IQR / 1.34 = 2 / 1.34, so the IQR term is used.
  CHECK(silverman_bandwidth(x) == doctest::Approx(0.9 * (2.0 / 1.34) * std::pow(5.0, -0.2)));
  const std::vector<double> tails = {0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0};
  // IQR is zero here, so the sd alone sets the spread.
  double m = 15.0 / 7.0, ss = 0.0;
  for (double t : tails) ss += (t - m) * (t - m);
  CHECK(silverman_bandwidth(tails) == doctest::Approx(0.9 * std::sqrt(ss / 6.0) * std::pow(7.0, -0.2)));
  CHECK(silverman_bandwidth(std::vector<double>{3.0}) == 0.0);
}

TEST_CASE("kkt report on optimal, shared and truncated solves") {
  const Network net = eight_node(200.0);
  const StochasticGrid grid = grid_for(net, 10);

  const KktReport rec = kkt_report(solve_chance_constrained(net, grid, with_gamma(100.0)), net);
  CHECK(rec.at_kkt_point);
  CHECK(rec.pass);
  CHECK(rec.recourse);
  REQUIRE(rec.nodes.size() == 1);
  CHECK(rec.nodes[0].node == "J3");
  CHECK(rec.nodes[0].rows.size() == 10);
  CHECK(rec.nodes[0].max_residual <= 1e-5);

  const KktReport shared = kkt_report(solve_chance_constrained(net, grid, with_gamma(100.0, false)), net);
  CHECK(shared.pass);
  CHECK_FALSE(shared.recourse);
  REQUIRE(shared.nodes.size() == 1);
  REQUIRE(shared.nodes[0].rows.size() == 1);
  CHECK(shared.nodes[0].rows[0].cell == -1);
  CHECK(shared.nodes[0].rows[0].reference == doctest::Approx(20.0));

  OgfOptions truncated = with_gamma(100.0);
  truncated.nlp.max_iterations = 2;
  const CcSolution early = solve_chance_constrained(net, grid, truncated);
  REQUIRE(early.status == NlpStatus::MaxIter);
  const KktReport informational = kkt_report(early, net);
  CHECK_FALSE(informational.at_kkt_point);
  CHECK_FALSE(informational.pass);
  CHECK(informational.note == "not at KKT point; residuals are informational");
  CHECK(informational.nodes.size() == 1);

  const KktReport det = kkt_report(solve_deterministic(eight_node(kInf), with_gamma(100.0)), net);
  CHECK(det.pass);
  CHECK(det.cells == 1);
  CHECK(det.nodes[0].rows[0].reference == doctest::Approx(20.0));
}

TEST_CASE("uniform draws are seeded and in the unit interval") {
  const std::vector<double> a = uniform_draws(7, 1000);
  CHECK(a == uniform_draws(7, 1000));
  CHECK(a != uniform_draws(8, 1000));
  CHECK(std::all_of(a.begin(), a.end(), [](double u) { return u >= 0.0 && u < 1.0; }));
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / 1000.0;
  CHECK(std::abs(mean - 0.5) < 0.05);
}

TEST_CASE("monte carlo is deterministic and independent of the thread count") {
  const Network net = eight_node(300.0);
  const StochasticGrid grid = grid_for(net, 12);
  const CcSolution sol = solve_chance_constrained(net, grid, with_gamma(100.0));
  REQUIRE(sol.status == NlpStatus::Optimal);
  const auto a = violation_probability(sol, net, grid, MonteCarloOptions{2000, 11, 1});
  const auto b = violation_probability(sol, net, grid, MonteCarloOptions{2000, 11, 1});
  const auto c = violation_probability(sol, net, grid, MonteCarloOptions{2000, 11, 3});
  REQUIRE(a.size() == 1);
  CHECK(a[0].node == "J5");
  CHECK(a[0].failures == 0);
  for (const auto* other : {&b, &c}) {
    CHECK((*other)[0].violation_fraction == a[0].violation_fraction);
    CHECK((*other)[0].mean_penalty == a[0].mean_penalty);
    CHECK((*other)[0].penalty_se == a[0].penalty_se);
  }
  CHECK_THROWS_AS(violation_probability(sol, net, grid, MonteCarloOptions{0, 1, 1}), Error);
  CHECK_THROWS_AS(violation_probability(sol, net, grid_for(net, 8)), Error);
}

TEST_CASE("monte carlo penalty matches the spline expectation when the constraint is slack") {
  // Fixed ratio 1 keeps N3 below its minimum for every offset, so the penalty is smooth.
  const Network net = single_pipe(10.0, 1.0);
  const StochasticGrid grid = grid_for(net, 40);
  const CcSolution sol = solve_chance_constrained(net, grid, with_gamma(1.0));
  REQUIRE(sol.status == NlpStatus::Optimal);
  REQUIRE(sol.chance.size() == 1);
  const auto mc = violation_probability(sol, net, grid, MonteCarloOptions{10000, 7, 1});
  CHECK(mc[0].violation_fraction == 1.0);
  CHECK(sol.chance[0].sfv_expectation > 0.0);
  CHECK(std::abs(mc[0].mean_penalty - sol.chance[0].sfv_expectation) <=
        3.0 * mc[0].penalty_se + 0.02 * sol.chance[0].sfv_expectation);
}

TEST_CASE("tighter epsilon lowers the violation probability") {
  const Network tight = single_pipe(0.01);
  const Network loose = single_pipe(0.1);
  const StochasticGrid grid = grid_for(tight, 40);
  const CcSolution a = solve_chance_constrained(tight, grid, with_gamma(1000.0));
  const CcSolution b = solve_chance_constrained(loose, grid, with_gamma(1000.0));
  REQUIRE(a.status == NlpStatus::Optimal);
  REQUIRE(b.status == NlpStatus::Optimal);
  const auto pa = violation_probability(a, tight, grid, MonteCarloOptions{5000, 3, 1});
  const auto pb = violation_probability(b, loose, grid, MonteCarloOptions{5000, 3, 1});
  CHECK(pa[0].violation_fraction < pb[0].violation_fraction);
  CHECK(pa[0].mean_penalty < pb[0].mean_penalty);
}
