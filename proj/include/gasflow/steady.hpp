#pragma once

#include "gasflow/network.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace gasflow {

/// Characteristic values used to nondimensionalise network states.
///
/// Squared pressures are measured against the slack squared pressure, and flows against
/// the flow that produces a unit squared-pressure drop across the most resistive pipe.
struct Scaling {
  double pressure = 1.0;          // Pa
  double squared_pressure = 1.0;  // Pa^2
  double flow = 1.0;              // kg/s
  double length = 1.0;            // m
  double velocity = 1.0;          // m/s

  /// Resistance unit: Pa^2 per (kg/s)^2.
  double resistance() const { return squared_pressure / (flow * flow); }
};

Scaling nondimensionalize(const Network& net);

struct SteadyState {
  std::vector<double> pi;   // squared pressure per node, Pa^2
  std::vector<double> phi;  // mass flow per edge, kg/s
  double residual_norm = 0.0;  // nondimensional, infinity norm
  int iterations = 0;
  std::vector<double> residual_history;
  double slack_withdrawal = 0.0;  // kg/s; negative when the slack injects gas

  std::vector<double> pressure() const;
};

struct SteadyOptions {
  double tolerance = 1e-10;
  int max_iterations = 50;
  double min_step = 1e-6;
};

/// Solve the steady flow equations for fixed compressor ratios `alpha` (compressors() order)
/// and nodal withdrawals `withdrawal` (nodes() order, kg/s; the slack entry is ignored).
///
/// Damped Newton on the nondimensional pipe, compressor and nodal balance equations with
/// the slack node's balance replaced by its fixed pressure. Throws Error on non-convergence
/// or when a squared pressure turns negative.
SteadyState solve_steady(const Network& net, std::span<const double> alpha,
                         std::span<const double> withdrawal, const SteadyOptions& options = {});

/// Jacobian of the steady residual at `state`, in nondimensional (scaled = true) or SI units.
/// Unknowns: squared pressures of non-slack nodes, then edge flows.
Eigen::MatrixXd steady_jacobian(const Network& net, std::span<const double> alpha,
                                const SteadyState& state, bool scaled);

}  // namespace gasflow
