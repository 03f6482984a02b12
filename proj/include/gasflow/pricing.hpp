#pragma once

#include "gasflow/network.hpp"
#include "gasflow/ogf.hpp"
#include "gasflow/stochastic.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gasflow {

/// Per-cell quantity of a solution, written "<quantity>@<id>", e.g. "pressure@N3".
struct Selector {
  enum class Quantity { Pressure, Flow, LambdaQ, LambdaD, Demand };
  Quantity quantity = Quantity::Pressure;
  std::string id;

  static Selector parse(std::string_view text);
  std::string str() const;
};

/// Values of the selected quantity in every cell (pressures in Pa, flows in kg/s).
std::vector<double> cell_values(const CcSolution& solution, const Network& net, const Selector& selector);

struct ValueDistribution {
  enum class Kind { Discrete, Density };
  Kind kind = Kind::Discrete;
  std::string selector;
  std::vector<double> omega;    // cell centres
  std::vector<double> support;  // per-cell values
  std::vector<double> mass;     // per-cell probabilities
  std::vector<double> grid;     // density abscissae (Density only)
  std::vector<double> density;
  double bandwidth = 0.0;

  double mean() const;
};

struct DensityOptions {
  /// Number of inverse-CDF samples fed to the kernel estimate; 0 keeps the distribution discrete.
  int samples = 10000;
  /// Minimum number of points of the density grid.
  int grid_points = 512;
};

/// Discrete distribution (value per cell, cell mass), plus a Gaussian kernel density estimate
/// of the spline interpolant of the cell values under the grid's measure.
ValueDistribution distribution_of(const CcSolution& solution, const Network& net, const Selector& selector,
                                  const StochasticGrid& grid, const DensityOptions& options = {});

/// Silverman's rule of thumb bandwidth.
double silverman_bandwidth(std::span<const double> samples);

/// Stationarity of an optimized nomination split between its nodal balance multiplier and its
/// bound multiplier: lambda_q + lambda_d = c * mass for demands, lambda_q - lambda_s = c * mass
/// for supplies. With shared nominations the identity sums over cells.
struct KktRow {
  int cell = 0;  // -1 for the summed identity of a shared nomination
  double omega = 0.0;
  double mass = 0.0;
  double lambda_q = 0.0;
  double lambda_bound = 0.0;
  double reference = 0.0;  // c * mass (c for the summed identity)
  double residual = 0.0;
};

struct KktNodeReport {
  std::string node;
  bool supply = false;
  double price = 0.0;
  double uniform_reference = 0.0;  // c / K
  double max_residual = 0.0;
  double max_uniform_residual = 0.0;
  std::vector<KktRow> rows;
};

struct KktReport {
  std::string status;
  bool at_kkt_point = false;
  int cells = 0;
  bool recourse = true;
  double tolerance = 1e-5;
  bool pass = false;
  std::string note;
  std::vector<KktNodeReport> nodes;
};

KktReport kkt_report(const CcSolution& solution, const Network& net, double tolerance = 1e-5);

struct MonteCarloOptions {
  int samples = 10000;
  std::uint64_t seed = 7;
  int threads = 1;
};

struct ViolationEstimate {
  std::string node;
  double epsilon = 0.0;
  double sfv_expectation = 0.0;
  int samples = 0;
  int failures = 0;  // samples whose steady solve failed; excluded from the estimates below
  std::vector<std::string> failure_messages;
  double violation_fraction = 0.0;  // P(Π < Π_min)
  double violation_se = 0.0;
  double mean_penalty = 0.0;  // E[Γ(Π_min - Π)]
  double penalty_se = 0.0;
};

/// Re-solves the steady physics at fixed optimal controls for sampled withdrawals and estimates
/// the violation probability and expected penalty at every chance-constrained node. Per-cell
/// nominations are interpolated over omega with the cell spline and clamped to their bounds.
std::vector<ViolationEstimate> violation_probability(const CcSolution& solution, const Network& net,
                                                     const StochasticGrid& grid,
                                                     const MonteCarloOptions& options = {});

/// Uniform(0,1) draws from a seeded 64-bit Mersenne twister, 53 bits each.
std::vector<double> uniform_draws(std::uint64_t seed, int count);

}  // namespace gasflow
