#pragma once

#include "gasflow/network.hpp"
#include "gasflow/nlp.hpp"
#include "gasflow/steady.hpp"
#include "gasflow/stochastic.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gasflow {

/// Shortfall penalty Γ(z) = gamma * max(z, 0)^2 on z = (Π_min - Π) / Π_slack, and the
/// smoothing used for φ|φ| in the optimization model.
struct PenaltyConfig {
  double gamma = 1.0;
  double delta = 1e-3;  // kg/s
  /// Half-width of an optional C2-at-the-left quartic blend around z = 0; 0 disables it.
  double blend = 0.0;

  double value(double z) const;
  double derivative(double z) const;
  double second_derivative(double z) const;
};

struct OgfOptions {
  PenaltyConfig penalty;
  /// One nomination per stochastic cell (a recourse decision). When false, every
  /// optimized d or s is a single value shared by all cells.
  bool recourse_nominations = true;
  NlpOptions nlp;
};

/// Index maps of the flattened decision vector. Variables and rows are stored in
/// nondimensional units (see nondimensionalize()).
struct OgfLayout {
  int cells = 1;
  bool recourse = true;
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  int num_variables = 0;
  int num_constraints = 0;

  std::vector<int> alpha;  // per compressor; -1 when alpha_max == 1 (ratio fixed at 1)
  /// Per node: first index of the nomination block (cells entries when recourse, else 1), or -1.
  std::vector<int> demand;
  std::vector<int> supply;
  /// Per cell: first index of the squared-pressure block (non-slack nodes, node order)
  /// and of the flow block (edges() order).
  std::vector<int> pi_start;
  std::vector<int> phi_start;
  std::vector<int> pi_slot;  // per node: position inside a pressure block, -1 for the slack

  /// Per cell: first row of the edge equations and of the balance rows (non-slack nodes).
  std::vector<int> edge_row;
  std::vector<int> balance_row;

  struct Chance {
    std::size_t node = 0;
    double epsilon = 0.0;
    int coef = 0;        // K + 3 spline coefficients
    int greville = 0;    // K + 3 squared pressures at the Greville abscissae
    int slack = 0;       // slack of the expectation row
    int greville_row = 0;
    int collocation_row = 0;
    int expectation_row = 0;
  };
  std::vector<Chance> chance;

  int pi(int cell, std::size_t node) const {
    return pi_slot[node] < 0 ? -1 : pi_start[static_cast<std::size_t>(cell)] + pi_slot[node];
  }
  int phi(int cell, std::size_t edge) const {
    return phi_start[static_cast<std::size_t>(cell)] + static_cast<int>(edge);
  }
  int demand_var(int cell, std::size_t node) const {
    return demand[node] < 0 ? -1 : demand[node] + (recourse ? cell : 0);
  }
  int supply_var(int cell, std::size_t node) const {
    return supply[node] < 0 ? -1 : supply[node] + (recourse ? cell : 0);
  }
};

class OgfModel;

struct OgfProblem {
  NlpProblem nlp;
  OgfLayout layout;
  Vector x0;
  std::shared_ptr<const OgfModel> model;
};

/// Deterministic optimal gas flow at the mean withdrawal of any uncertain node, with hard
/// pressure bounds everywhere.
OgfProblem assemble_deterministic(const Network& net, const OgfOptions& options = {});

/// Chance-constrained optimal gas flow over the cells of `grids` (exactly one grid, the
/// uncertain node's). Nodes with an uncertainty spec or an explicit chance flag have their
/// lower pressure bound replaced by the expected-penalty constraint E[Γ] <= epsilon.
OgfProblem assemble_chance_constrained(const Network& net, std::span<const StochasticGrid> grids,
                                       const OgfOptions& options = {});

struct CellSolution {
  double omega = 0.0;  // withdrawal offset at the cell centre, kg/s
  double mass = 0.0;
  std::vector<double> pi;          // per node, Pa^2
  std::vector<double> phi;         // per edge, kg/s
  std::vector<double> withdrawal;  // per node, net q_j = d_j + r_j - s_j, kg/s
  std::vector<double> d;           // per node, demand nomination (base value if not optimized)
  std::vector<double> s;           // per node, supply nomination
  /// Marginal cost of an extra unit of withdrawal in this cell (per node, 0 at the slack).
  std::vector<double> lambda_q;
  /// Net bound multiplier of the demand / supply nomination (per node, 0 if not optimized).
  std::vector<double> lambda_d;
  std::vector<double> lambda_s;

  std::vector<double> pressure() const;
};

struct ChanceSolution {
  std::string node;
  std::size_t node_index = 0;
  double epsilon = 0.0;
  std::vector<double> coefficients;  // spline coefficients of Γ over the unit coordinate
  double sfv_expectation = 0.0;      // Σ a_m ∫ b_m dμ
  double lambda_cc = 0.0;            // multiplier of the expectation row, currency per unit ε
};

struct CcSolution {
  NlpStatus status = NlpStatus::MaxIter;
  std::string message;
  int iterations = 0;
  KktResiduals kkt;
  bool recourse = true;
  double gamma = 1.0;
  double pi_scale = 1.0;  // Pa^2 used to nondimensionalise the penalty argument

  double objective = 0.0;  // E[W_c] - E[W_e]
  double expected_compressor_power = 0.0;
  double expected_economic_value = 0.0;
  std::vector<double> alpha;  // per compressor
  std::vector<CellSolution> cells;
  std::vector<ChanceSolution> chance;
  std::string uncertain_node;  // empty for deterministic solves

  /// Expected nomination of node j.
  double expected_demand(std::size_t node) const;
  double expected_supply(std::size_t node) const;
};

CcSolution decode(const OgfProblem& problem, const NlpSolution& solution);

/// Assemble, solve and decode.
CcSolution solve_deterministic(const Network& net, const OgfOptions& options = {});
CcSolution solve_chance_constrained(const Network& net, const StochasticGrid& grid,
                                    const OgfOptions& options = {});

/// build_grid on the spec of the network's unique uncertain node.
StochasticGrid grid_for(const Network& net, int cells);

}  // namespace gasflow
