#include "gasflow/pricing.hpp"

#include "gasflow/error.hpp"
#include "gasflow/steady.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

namespace gasflow {

namespace {

constexpr const char* kModule = "pricing_stats";

struct QuantityName {
  Selector::Quantity quantity;
  const char* name;
};

constexpr QuantityName kQuantities[] = {
    {Selector::Quantity::Pressure, "pressure"}, {Selector::Quantity::Flow, "flow"},
    {Selector::Quantity::LambdaQ, "lambda_q"},  {Selector::Quantity::LambdaD, "lambda_d"},
    {Selector::Quantity::Demand, "d"},
};

/// Unit coordinate of a sample drawn by inverse CDF from u.
double unit_sample(const StochasticGrid& grid, double u) {
  if (grid.degenerate() || grid.spec().dist == Distribution::Uniform) return u;
  return grid.to_unit(sample_value(grid.spec(), u));
}

Eigen::MatrixXd interpolation_at(const StochasticGrid& grid, std::span<const double> unit) {
  return spline_interpolation_matrix(grid.centers_unit(), unit);
}

double sample_std(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

Selector Selector::parse(std::string_view text) {
  const auto at = text.find('@');
  if (at == std::string_view::npos || at == 0 || at + 1 == text.size()) {
    throw input_error(kModule, std::string(text), "selector must look like quantity@id");
  }
  const std::string_view name = text.substr(0, at);
  for (const QuantityName& q : kQuantities) {
    if (name == q.name) return Selector{q.quantity, std::string(text.substr(at + 1))};
  }
  throw input_error(kModule, std::string(text),
                    "unknown quantity '" + std::string(name) + "' (pressure, flow, lambda_q, lambda_d, d)");
}

std::string Selector::str() const {
  for (const QuantityName& q : kQuantities) {
    if (q.quantity == quantity) return std::string(q.name) + "@" + id;
  }
  return id;
}

std::vector<double> cell_values(const CcSolution& solution, const Network& net, const Selector& selector) {
  std::vector<double> out;
  out.reserve(solution.cells.size());
  if (selector.quantity == Selector::Quantity::Flow) {
    const auto e = net.find_edge(selector.id);
    if (!e) throw input_error(kModule, "edge " + selector.id, "unknown edge in selector " + selector.str());
    for (const CellSolution& c : solution.cells) out.push_back(c.phi[*e]);
    return out;
  }
  const auto j = net.find_node(selector.id);
  if (!j) throw input_error(kModule, "node " + selector.id, "unknown node in selector " + selector.str());
  for (const CellSolution& c : solution.cells) {
    switch (selector.quantity) {
      case Selector::Quantity::Pressure: out.push_back(std::sqrt(std::max(c.pi[*j], 0.0))); break;
      case Selector::Quantity::LambdaQ: out.push_back(c.lambda_q[*j]); break;
      case Selector::Quantity::LambdaD: out.push_back(c.lambda_d[*j]); break;
      case Selector::Quantity::Demand: out.push_back(c.d[*j]); break;
      case Selector::Quantity::Flow: break;
    }
  }
  return out;
}

double ValueDistribution::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < support.size(); ++k) m += support[k] * mass[k];
  return m;
}

double silverman_bandwidth(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  const double sd = sample_std(samples, mean);
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = (quantile(0.75) - quantile(0.25)) / 1.34;
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr);
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

ValueDistribution distribution_of(const CcSolution& solution, const Network& net, const Selector& selector,
                                  const StochasticGrid& grid, const DensityOptions& options) {
  ValueDistribution out;
  out.selector = selector.str();
  out.support = cell_values(solution, net, selector);
  if (static_cast<int>(out.support.size()) != grid.cells()) {
    throw input_error(kModule, "", "solution has " + std::to_string(out.support.size()) +
                                       " cells but the grid has " + std::to_string(grid.cells()));
  }
  for (const CellSolution& c : solution.cells) {
    out.omega.push_back(c.omega);
    out.mass.push_back(c.mass);
  }
  if (options.samples <= 0) return out;

  // Stratified inverse-CDF draws keep the estimate deterministic.
  const int n = options.samples;
  std::vector<double> unit(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) unit[static_cast<std::size_t>(i)] = unit_sample(grid, (i + 0.5) / n);
  const Eigen::VectorXd cells = Eigen::Map<const Eigen::VectorXd>(out.support.data(),
                                                                  static_cast<Eigen::Index>(out.support.size()));
  const Eigen::VectorXd values = interpolation_at(grid, unit) * cells;
  std::vector<double> samples(values.data(), values.data() + values.size());

  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  double h = silverman_bandwidth(samples);
  const double floor = 1e-6 * std::max({1.0, std::abs(lo), std::abs(hi)});
  h = std::max(h, floor);

  const double a = lo - 5.0 * h;
  const double b = hi + 5.0 * h;
  const int points = std::clamp(static_cast<int>(std::ceil((b - a) / (0.25 * h))) + 1, options.grid_points, 1 << 18);
  const double dx = (b - a) / (points - 1);
  out.grid.resize(static_cast<std::size_t>(points));
  out.density.assign(static_cast<std::size_t>(points), 0.0);
  for (int i = 0; i < points; ++i) out.grid[static_cast<std::size_t>(i)] = a + i * dx;

  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  const double reach = 8.0 * h;
  for (double s : samples) {
    const int first = std::max(0, static_cast<int>(std::floor((s - reach - a) / dx)));
    const int last = std::min(points - 1, static_cast<int>(std::ceil((s + reach - a) / dx)));
    for (int i = first; i <= last; ++i) {
      const double z = (out.grid[static_cast<std::size_t>(i)] - s) / h;
      out.density[static_cast<std::size_t>(i)] += norm * std::exp(-0.5 * z * z);
    }
  }
  out.kind = ValueDistribution::Kind::Density;
  out.bandwidth = h;
  return out;
}

KktReport kkt_report(const CcSolution& solution, const Network& net, double tolerance) {
  KktReport report;
  report.status = to_string(solution.status);
  report.at_kkt_point = solution.status == NlpStatus::Optimal;
  report.cells = static_cast<int>(solution.cells.size());
  report.recourse = solution.recourse;
  report.tolerance = tolerance;
  if (!report.at_kkt_point) report.note = "not at KKT point; residuals are informational";

  const double k = static_cast<double>(solution.cells.size());
  for (std::size_t j = 0; j < net.num_nodes(); ++j) {
    const Node& n = net.nodes()[j];
    for (const bool supply : {false, true}) {
      if (supply ? !n.supply_optimized : !n.demand_optimized) continue;
      KktNodeReport nr;
      nr.node = n.id;
      nr.supply = supply;
      nr.price = supply ? n.supply_price : n.demand_price;
      nr.uniform_reference = nr.price / k;
      const double sign = supply ? -1.0 : 1.0;
      auto bound = [&](const CellSolution& c) { return supply ? c.lambda_s[j] : c.lambda_d[j]; };
      if (solution.recourse) {
        for (std::size_t c = 0; c < solution.cells.size(); ++c) {
          const CellSolution& cell = solution.cells[c];
          KktRow row;
          row.cell = static_cast<int>(c);
          row.omega = cell.omega;
          row.mass = cell.mass;
          row.lambda_q = cell.lambda_q[j];
          row.lambda_bound = bound(cell);
          row.reference = nr.price * cell.mass;
          const double lhs = row.lambda_q + sign * row.lambda_bound;
          row.residual = lhs - row.reference;
          nr.max_residual = std::max(nr.max_residual, std::abs(row.residual));
          nr.max_uniform_residual = std::max(nr.max_uniform_residual, std::abs(lhs - nr.uniform_reference));
          nr.rows.push_back(row);
        }
      } else {
        KktRow row;
        row.cell = -1;
        row.mass = 1.0;
        for (const CellSolution& cell : solution.cells) row.lambda_q += cell.lambda_q[j];
        if (!solution.cells.empty()) row.lambda_bound = bound(solution.cells.front());
        row.reference = nr.price;
        row.residual = row.lambda_q + sign * row.lambda_bound - row.reference;
        nr.max_residual = std::abs(row.residual);
        nr.max_uniform_residual = nr.max_residual;
        nr.rows.push_back(row);
      }
      report.nodes.push_back(std::move(nr));
    }
  }
  bool ok = report.at_kkt_point && !report.nodes.empty();
  for (const KktNodeReport& nr : report.nodes) ok = ok && nr.max_residual <= tolerance;
  report.pass = ok;
  if (report.nodes.empty() && report.note.empty()) report.note = "no optimized nominations";
  return report;
}

std::vector<double> uniform_draws(std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::vector<double> u(static_cast<std::size_t>(std::max(count, 0)));
  for (double& v : u) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return u;
}

std::vector<ViolationEstimate> violation_probability(const CcSolution& solution, const Network& net,
                                                     const StochasticGrid& grid,
                                                     const MonteCarloOptions& options) {
  if (options.samples <= 0) throw input_error(kModule, "", "Monte Carlo needs a positive sample count");
  if (static_cast<int>(solution.cells.size()) != grid.cells()) {
    throw input_error(kModule, "", "solution has " + std::to_string(solution.cells.size()) +
                                       " cells but the grid has " + std::to_string(grid.cells()));
  }
  const auto uncertain = net.find_node(grid.node_id().empty() ? solution.uncertain_node : grid.node_id());
  if (!uncertain) throw input_error(kModule, "node " + grid.node_id(), "unknown uncertain node");

  const std::size_t nv = net.num_nodes();
  const int n = options.samples;
  const std::vector<double> u = uniform_draws(options.seed, n);
  std::vector<double> omega(static_cast<std::size_t>(n));
  std::vector<double> unit(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    omega[static_cast<std::size_t>(i)] = sample_value(grid.spec(), u[static_cast<std::size_t>(i)]);
    unit[static_cast<std::size_t>(i)] = unit_sample(grid, u[static_cast<std::size_t>(i)]);
  }

  // Nominations per sample: interpolated recourse or the shared value.
  std::vector<std::vector<double>> base(static_cast<std::size_t>(n), std::vector<double>(nv, 0.0));
  const bool varies = solution.recourse && solution.cells.size() >= 4;
  const Eigen::MatrixXd interp = varies ? interpolation_at(grid, unit) : Eigen::MatrixXd();
  for (std::size_t j = 0; j < nv; ++j) {
    const Node& node = net.nodes()[j];
    for (const bool supply : {false, true}) {
      const bool optimized = supply ? node.supply_optimized : node.demand_optimized;
      const double sign = supply ? -1.0 : 1.0;
      if (!optimized || !varies) {
        const double v = supply ? solution.cells.front().s[j] : solution.cells.front().d[j];
        for (auto& q : base) q[j] += sign * v;
        continue;
      }
      Eigen::VectorXd cells(static_cast<Eigen::Index>(solution.cells.size()));
      for (std::size_t c = 0; c < solution.cells.size(); ++c) {
        cells(static_cast<Eigen::Index>(c)) = supply ? solution.cells[c].s[j] : solution.cells[c].d[j];
      }
      const Eigen::VectorXd at = interp * cells;
      const double cap = supply ? node.supply_max : node.demand_max;
      for (int i = 0; i < n; ++i) base[static_cast<std::size_t>(i)][j] += sign * std::clamp(at(i), 0.0, cap);
    }
  }

  std::vector<std::size_t> chance;
  for (const ChanceSolution& c : solution.chance) chance.push_back(c.node_index);
  const std::size_t nc = chance.size();
  std::vector<double> pi(static_cast<std::size_t>(n) * nc, 0.0);
  std::vector<char> ok(static_cast<std::size_t>(n), 0);
  std::vector<std::string> message(static_cast<std::size_t>(n));

  auto work = [&](int begin, int end) {
    std::vector<double> q(nv);
    for (int i = begin; i < end; ++i) {
      const auto si = static_cast<std::size_t>(i);
      q = base[si];
      q[*uncertain] += omega[si];
      try {
        const SteadyState st = solve_steady(net, solution.alpha, q);
        for (std::size_t c = 0; c < nc; ++c) pi[si * nc + c] = st.pi[chance[c]];
        ok[si] = 1;
      } catch (const Error& e) {
        message[si] = "sample " + std::to_string(i) + " (omega " + std::to_string(omega[si]) + "): " + e.what();
      }
    }
  };
  const int threads = std::clamp(options.threads, 1, n);
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, n * t / threads, n * (t + 1) / threads);
    for (std::thread& th : pool) th.join();
  }

  PenaltyConfig pen;
  pen.gamma = solution.gamma;
  std::vector<ViolationEstimate> out;
  for (std::size_t c = 0; c < nc; ++c) {
    const ChanceSolution& cs = solution.chance[c];
    ViolationEstimate est;
    est.node = cs.node;
    est.epsilon = cs.epsilon;
    est.sfv_expectation = cs.sfv_expectation;
    est.samples = n;
    const double pmin = net.nodes()[cs.node_index].pressure_min;
    const double pi_min = pmin * pmin;
    std::vector<double> penalty;
    std::vector<double> hit;
    for (int i = 0; i < n; ++i) {
      const auto si = static_cast<std::size_t>(i);
      if (!ok[si]) {
        ++est.failures;
        if (est.failure_messages.size() < 10) est.failure_messages.push_back(message[si]);
        continue;
      }
      const double p = pi[si * nc + c];
      penalty.push_back(pen.value((pi_min - p) / solution.pi_scale));
      hit.push_back(p < pi_min ? 1.0 : 0.0);
    }
    const double m = static_cast<double>(penalty.size());
    if (m > 0) {
      est.mean_penalty = std::accumulate(penalty.begin(), penalty.end(), 0.0) / m;
      est.penalty_se = sample_std(penalty, est.mean_penalty) / std::sqrt(m);
      est.violation_fraction = std::accumulate(hit.begin(), hit.end(), 0.0) / m;
      est.violation_se = std::sqrt(est.violation_fraction * (1.0 - est.violation_fraction) / m);
    }
    out.push_back(std::move(est));
  }
  return out;
}

}  // namespace gasflow
