#include "gasflow/ogf.hpp"

#include "gasflow/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gasflow {

namespace {

constexpr const char* kModule = "ogf_core";

using Triplet = Eigen::Triplet<double>;

/// Smoothed signed square ψ(φ) = φ sqrt(φ² + δ²) and its derivatives.
struct Smooth {
  double delta;
  double value(double f) const { return f * std::sqrt(f * f + delta * delta); }
  double first(double f) const {
    const double s = std::sqrt(f * f + delta * delta);
    return (2.0 * f * f + delta * delta) / s;
  }
  double second(double f) const {
    const double s2 = f * f + delta * delta;
    const double s = std::sqrt(s2);
    return (2.0 * f * f * f + 3.0 * f * delta * delta) / (s2 * s);
  }
};

}  // namespace

double PenaltyConfig::value(double z) const {
  if (blend > 0.0 && std::abs(z) <= blend) {
    const double u = z + blend;
    return gamma * u * u * u * u / (16.0 * blend * blend);
  }
  return z > 0.0 ? gamma * z * z : 0.0;
}

double PenaltyConfig::derivative(double z) const {
  if (blend > 0.0 && std::abs(z) <= blend) {
    const double u = z + blend;
    return gamma * u * u * u / (4.0 * blend * blend);
  }
  return z > 0.0 ? 2.0 * gamma * z : 0.0;
}

double PenaltyConfig::second_derivative(double z) const {
  if (blend > 0.0 && std::abs(z) <= blend) {
    const double u = z + blend;
    return 3.0 * gamma * u * u / (4.0 * blend * blend);
  }
  return z > 0.0 ? 2.0 * gamma : 0.0;
}

/// Immutable data behind an assembled problem; the NlpProblem callbacks share it.
class OgfModel {
 public:
  OgfModel(const Network& net, const StochasticGrid* grid, const OgfOptions& options);

  const Network& network() const { return net_; }
  const Scaling& scaling() const { return scale_; }
  const OgfLayout& layout() const { return layout_; }
  const OgfOptions& options() const { return options_; }
  bool stochastic() const { return grid_.has_value(); }
  const std::optional<StochasticGrid>& grid() const { return grid_; }
  std::optional<std::size_t> uncertain_node() const { return uncertain_; }
  double mass(int k) const { return mass_[static_cast<std::size_t>(k)]; }
  double omega(int k) const { return omega_[static_cast<std::size_t>(k)]; }
  double mean_offset() const { return r_mean_; }

  Vector lower() const { return lower_; }
  Vector upper() const { return upper_; }

  double objective(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  Vector constraints(const Vector& x) const;
  SparseMatrix jacobian(const Vector& x) const;
  SparseMatrix hessian(const Vector& x, double sigma, const Vector& y) const;

  /// Nondimensional nomination of node j in cell k (variable or fixed base value).
  double demand(const Vector& x, int k, std::size_t j) const {
    const int v = layout_.demand_var(k, j);
    return v < 0 ? base_d_[j] : x(v);
  }
  double supply(const Vector& x, int k, std::size_t j) const {
    const int v = layout_.supply_var(k, j);
    return v < 0 ? base_s_[j] : x(v);
  }
  double pi(const Vector& x, int k, std::size_t j) const {
    const int v = layout_.pi(k, j);
    return v < 0 ? 1.0 : x(v);
  }
  double alpha(const Vector& x, std::size_t c) const {
    const int v = layout_.alpha[c];
    return v < 0 ? 1.0 : x(v);
  }
  /// Nondimensional uncertain offset of node j in cell k.
  double offset(int k, std::size_t j) const {
    return uncertain_ && *uncertain_ == j ? r_[static_cast<std::size_t>(k)] : 0.0;
  }

  double compressor_power(const Vector& x) const;  // E[W_c], physical
  double economic_value(const Vector& x) const;    // E[W_e], physical

  Vector initial_point() const;

  const Eigen::MatrixXd& greville_interp() const { return s_; }
  const Eigen::MatrixXd& collocation() const { return b_; }
  const Eigen::VectorXd& integrals() const { return ints_; }
  double pi_min(std::size_t j) const { return pi_min_[j]; }

 private:
  void build_layout();

  Network net_;
  OgfOptions options_;
  Scaling scale_;
  OgfLayout layout_;
  std::optional<StochasticGrid> grid_;
  std::optional<std::size_t> uncertain_;
  int cells_ = 1;
  std::vector<double> mass_;
  std::vector<double> omega_;  // physical offset per cell
  std::vector<double> r_;      // nondimensional offset per cell
  double r_mean_ = 0.0;

  std::vector<double> base_d_, base_s_;  // nondimensional
  std::vector<double> pi_min_, pi_max_;  // nondimensional
  std::vector<double> kappa_;            // nondimensional, per pipe
  Smooth smooth_{1e-3};

  Eigen::MatrixXd s_;  // (K+3) x K: cell values -> Greville values
  Eigen::MatrixXd b_;  // (K+3) x (K+3): basis at Greville abscissae
  Eigen::VectorXd ints_;

  Vector lower_, upper_;
};

OgfModel::OgfModel(const Network& net, const StochasticGrid* grid, const OgfOptions& options)
    : net_(net), options_(options), scale_(nondimensionalize(net)) {
  const PenaltyConfig& pen = options.penalty;
  if (!(pen.gamma > 0.0)) throw input_error(kModule, "", "penalty gamma must be positive");
  if (!(pen.delta >= 0.0)) throw input_error(kModule, "", "smoothing delta must be non-negative");
  if (!(pen.blend >= 0.0)) throw input_error(kModule, "", "penalty blend must be non-negative");
  smooth_.delta = pen.delta / scale_.flow;

  const std::vector<std::size_t> uncertain = net.uncertain_nodes();
  if (uncertain.size() > 1) {
    throw input_error(kModule, "node " + net.nodes()[uncertain[1]].id,
                      "only one uncertain node is supported");
  }
  if (grid) {
    grid_ = *grid;
    std::size_t node = 0;
    if (!grid->node_id().empty()) {
      const auto found = net.find_node(grid->node_id());
      if (!found) throw input_error(kModule, "node " + grid->node_id(), "grid refers to an unknown node");
      node = *found;
      if (!uncertain.empty() && uncertain[0] != node) {
        throw input_error(kModule, "node " + grid->node_id(),
                          "grid node differs from the uncertain node " + net.nodes()[uncertain[0]].id);
      }
    } else if (!uncertain.empty()) {
      node = uncertain[0];
    } else {
      throw input_error(kModule, "", "grid has no node and the network has no uncertain node");
    }
    if (net.nodes()[node].is_slack()) {
      throw input_error(kModule, "node " + net.nodes()[node].id, "uncertain withdrawal at the slack node");
    }
    uncertain_ = node;
    cells_ = grid->cells();
    mass_ = grid->cell_mass();
    omega_ = grid->centers();
    r_mean_ = grid->expected_value();
  } else {
    cells_ = 1;
    mass_ = {1.0};
    if (!uncertain.empty()) {
      uncertain_ = uncertain[0];
      r_mean_ = net.nodes()[uncertain[0]].uncertainty->expected_value();
    }
    omega_ = {r_mean_};
  }
  r_.resize(omega_.size());
  for (std::size_t k = 0; k < omega_.size(); ++k) r_[k] = omega_[k] / scale_.flow;

  const std::size_t nv = net.num_nodes();
  base_d_.resize(nv);
  base_s_.resize(nv);
  pi_min_.resize(nv);
  pi_max_.resize(nv);
  for (std::size_t j = 0; j < nv; ++j) {
    const Node& n = net.nodes()[j];
    base_d_[j] = n.demand / scale_.flow;
    base_s_[j] = n.supply / scale_.flow;
    pi_min_[j] = n.pressure_min * n.pressure_min / scale_.squared_pressure;
    pi_max_[j] = n.pressure_max * n.pressure_max / scale_.squared_pressure;
    if (!(pi_min_[j] < pi_max_[j])) {
      throw input_error(kModule, "node " + n.id, "empty pressure window (pressure_min >= pressure_max)");
    }
    if (n.demand_optimized && !(n.demand_max > 0.0)) {
      throw input_error(kModule, "node " + n.id, "optimized demand needs a positive demand_max");
    }
    if (n.supply_optimized && !(n.supply_max > 0.0)) {
      throw input_error(kModule, "node " + n.id, "optimized supply needs a positive supply_max");
    }
  }
  kappa_.resize(net.pipes().size());
  for (std::size_t p = 0; p < kappa_.size(); ++p) kappa_[p] = net.resistances()[p] / scale_.resistance();

  build_layout();

  if (grid_) {
    const std::vector<double>& centers = grid_->centers_unit();
    const std::vector<double>& gre = grid_->greville_unit();
    s_ = spline_interpolation_matrix(centers, gre);
    b_ = grid_->basis().collocation_matrix(gre);
    ints_ = grid_->basis_integrals();
  }
}

void OgfModel::build_layout() {
  OgfLayout& L = layout_;
  const std::size_t nv = net_.num_nodes();
  const std::size_t ne = net_.num_edges();
  L.cells = cells_;
  L.recourse = options_.recourse_nominations;
  L.num_nodes = nv;
  L.num_edges = ne;
  int next = 0;
  std::vector<double> lo, hi;
  auto add = [&](int count, double l, double h) {
    const int start = next;
    for (int i = 0; i < count; ++i) {
      lo.push_back(l);
      hi.push_back(h);
    }
    next += count;
    return start;
  };

  L.alpha.assign(net_.compressors().size(), -1);
  for (std::size_t c = 0; c < net_.compressors().size(); ++c) {
    const double amax = net_.compressors()[c].alpha_max;
    if (amax > 1.0) L.alpha[c] = add(1, 1.0, amax);
  }
  const int per_node = L.recourse ? cells_ : 1;
  L.demand.assign(nv, -1);
  L.supply.assign(nv, -1);
  for (std::size_t j = 0; j < nv; ++j) {
    const Node& n = net_.nodes()[j];
    if (n.demand_optimized) L.demand[j] = add(per_node, 0.0, n.demand_max / scale_.flow);
    if (n.supply_optimized) L.supply[j] = add(per_node, 0.0, n.supply_max / scale_.flow);
  }

  std::vector<bool> relaxed(nv, false);
  if (grid_) {
    for (std::size_t j = 0; j < nv; ++j) {
      const Node& n = net_.nodes()[j];
      if (n.is_slack()) continue;
      if (n.relaxes_pressure_min() || (uncertain_ && *uncertain_ == j)) {
        if (!n.epsilon) {
          throw input_error(kModule, "node " + n.id, "chance-constrained node is missing epsilon");
        }
        relaxed[j] = true;
      }
    }
  }

  L.pi_slot.assign(nv, -1);
  int slot = 0;
  for (std::size_t j = 0; j < nv; ++j) {
    if (j != net_.slack_index()) L.pi_slot[j] = slot++;
  }
  const int n_pi = slot;
  L.pi_start.resize(static_cast<std::size_t>(cells_));
  L.phi_start.resize(static_cast<std::size_t>(cells_));
  for (int k = 0; k < cells_; ++k) {
    L.pi_start[static_cast<std::size_t>(k)] = next;
    for (std::size_t j = 0; j < nv; ++j) {
      if (L.pi_slot[j] < 0) continue;
      add(1, relaxed[j] ? 0.0 : pi_min_[j], pi_max_[j]);
    }
    L.phi_start[static_cast<std::size_t>(k)] = add(static_cast<int>(ne), -kInf, kInf);
  }

  int row = 0;
  L.edge_row.resize(static_cast<std::size_t>(cells_));
  L.balance_row.resize(static_cast<std::size_t>(cells_));
  for (int k = 0; k < cells_; ++k) {
    L.edge_row[static_cast<std::size_t>(k)] = row;
    row += static_cast<int>(ne);
    L.balance_row[static_cast<std::size_t>(k)] = row;
    row += n_pi;
  }

  if (grid_) {
    const int nb = cells_ + 3;
    for (std::size_t j = 0; j < nv; ++j) {
      if (!relaxed[j]) continue;
      OgfLayout::Chance ch;
      ch.node = j;
      ch.epsilon = *net_.nodes()[j].epsilon;
      ch.coef = add(nb, -kInf, kInf);
      ch.greville = add(nb, -kInf, kInf);
      ch.slack = add(1, 0.0, kInf);
      ch.greville_row = row;
      row += nb;
      ch.collocation_row = row;
      row += nb;
      ch.expectation_row = row;
      row += 1;
      L.chance.push_back(ch);
    }
  }
  L.num_variables = next;
  L.num_constraints = row;
  lower_ = Eigen::Map<Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  upper_ = Eigen::Map<Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
}

double OgfModel::objective(const Vector& x) const {
  double f = 0.0;
  const auto& comps = net_.compressors();
  const std::size_t np = net_.pipes().size();
  for (int k = 0; k < cells_; ++k) {
    const double m = mass(k);
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const double a = alpha(x, c);
      f += m * comps[c].eta * (std::pow(a, comps[c].m) - 1.0) * x(layout_.phi(k, np + c));
    }
    for (std::size_t j = 0; j < net_.num_nodes(); ++j) {
      const Node& n = net_.nodes()[j];
      if (n.demand_optimized) f -= m * n.demand_price * demand(x, k, j);
      if (n.supply_optimized) f += m * n.supply_price * supply(x, k, j);
    }
  }
  if (uncertain_) f -= net_.nodes()[*uncertain_].demand_price * r_mean_ / scale_.flow;
  return f;
}

Vector OgfModel::gradient(const Vector& x) const {
  Vector g = Vector::Zero(layout_.num_variables);
  const auto& comps = net_.compressors();
  const std::size_t np = net_.pipes().size();
  for (int k = 0; k < cells_; ++k) {
    const double m = mass(k);
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const double a = alpha(x, c);
      const Compressor& comp = comps[c];
      const int iphi = layout_.phi(k, np + c);
      g(iphi) += m * comp.eta * (std::pow(a, comp.m) - 1.0);
      if (layout_.alpha[c] >= 0) {
        g(layout_.alpha[c]) += m * comp.eta * comp.m * std::pow(a, comp.m - 1.0) * x(iphi);
      }
    }
    for (std::size_t j = 0; j < net_.num_nodes(); ++j) {
      const Node& n = net_.nodes()[j];
      if (n.demand_optimized) g(layout_.demand_var(k, j)) -= m * n.demand_price;
      if (n.supply_optimized) g(layout_.supply_var(k, j)) += m * n.supply_price;
    }
  }
  return g;
}

Vector OgfModel::constraints(const Vector& x) const {
  Vector c(layout_.num_constraints);
  const std::size_t ne = net_.num_edges();
  const auto& edges = net_.edges();
  for (int k = 0; k < cells_; ++k) {
    const int er = layout_.edge_row[static_cast<std::size_t>(k)];
    Vector balance = Vector::Zero(static_cast<Eigen::Index>(net_.num_nodes()));
    for (std::size_t e = 0; e < ne; ++e) {
      const Edge& ed = edges[e];
      const double phi = x(layout_.phi(k, e));
      if (ed.kind == EdgeKind::Pipe) {
        c(er + static_cast<int>(e)) = pi(x, k, ed.from) - pi(x, k, ed.to) - kappa_[ed.index] * smooth_.value(phi);
      } else {
        c(er + static_cast<int>(e)) = pi(x, k, ed.to) - alpha(x, ed.index) * pi(x, k, ed.from);
      }
      balance(static_cast<Eigen::Index>(ed.to)) += phi;
      balance(static_cast<Eigen::Index>(ed.from)) -= phi;
    }
    const int br = layout_.balance_row[static_cast<std::size_t>(k)];
    for (std::size_t j = 0; j < net_.num_nodes(); ++j) {
      if (layout_.pi_slot[j] < 0) continue;
      c(br + layout_.pi_slot[j]) = balance(static_cast<Eigen::Index>(j)) - demand(x, k, j) +
                                   supply(x, k, j) - offset(k, j);
    }
  }
  const PenaltyConfig& pen = options_.penalty;
  for (const OgfLayout::Chance& ch : layout_.chance) {
    const int nb = cells_ + 3;
    Vector cell_pi(cells_);
    for (int k = 0; k < cells_; ++k) cell_pi(k) = x(layout_.pi(k, ch.node));
    const Vector at_greville = s_ * cell_pi;
    const Vector coef = x.segment(ch.coef, nb);
    const Vector pg = x.segment(ch.greville, nb);
    c.segment(ch.greville_row, nb) = pg - at_greville;
    const Vector spline = b_ * coef;
    for (int i = 0; i < nb; ++i) {
      c(ch.collocation_row + i) = spline(i) - pen.value(pi_min_[ch.node] - pg(i));
    }
    c(ch.expectation_row) = ints_.dot(coef) + x(ch.slack) - ch.epsilon;
  }
  return c;
}

SparseMatrix OgfModel::jacobian(const Vector& x) const {
  std::vector<Triplet> t;
  const std::size_t ne = net_.num_edges();
  const auto& edges = net_.edges();
  t.reserve(static_cast<std::size_t>(cells_) * ne * 5);
  for (int k = 0; k < cells_; ++k) {
    const int er = layout_.edge_row[static_cast<std::size_t>(k)];
    const int br = layout_.balance_row[static_cast<std::size_t>(k)];
    for (std::size_t e = 0; e < ne; ++e) {
      const Edge& ed = edges[e];
      const int row = er + static_cast<int>(e);
      const int iphi = layout_.phi(k, e);
      const int ifrom = layout_.pi(k, ed.from);
      const int ito = layout_.pi(k, ed.to);
      if (ed.kind == EdgeKind::Pipe) {
        if (ifrom >= 0) t.emplace_back(row, ifrom, 1.0);
        if (ito >= 0) t.emplace_back(row, ito, -1.0);
        t.emplace_back(row, iphi, -kappa_[ed.index] * smooth_.first(x(iphi)));
      } else {
        if (ito >= 0) t.emplace_back(row, ito, 1.0);
        if (ifrom >= 0) t.emplace_back(row, ifrom, -alpha(x, ed.index));
        if (layout_.alpha[ed.index] >= 0) t.emplace_back(row, layout_.alpha[ed.index], -pi(x, k, ed.from));
      }
      if (layout_.pi_slot[ed.to] >= 0) t.emplace_back(br + layout_.pi_slot[ed.to], iphi, 1.0);
      if (layout_.pi_slot[ed.from] >= 0) t.emplace_back(br + layout_.pi_slot[ed.from], iphi, -1.0);
    }
    for (std::size_t j = 0; j < net_.num_nodes(); ++j) {
      if (layout_.pi_slot[j] < 0) continue;
      const int row = br + layout_.pi_slot[j];
      if (layout_.demand[j] >= 0) t.emplace_back(row, layout_.demand_var(k, j), -1.0);
      if (layout_.supply[j] >= 0) t.emplace_back(row, layout_.supply_var(k, j), 1.0);
    }
  }
  const PenaltyConfig& pen = options_.penalty;
  for (const OgfLayout::Chance& ch : layout_.chance) {
    const int nb = cells_ + 3;
    for (int i = 0; i < nb; ++i) {
      t.emplace_back(ch.greville_row + i, ch.greville + i, 1.0);
      for (int k = 0; k < cells_; ++k) t.emplace_back(ch.greville_row + i, layout_.pi(k, ch.node), -s_(i, k));
      for (int m = 0; m < nb; ++m) {
        if (b_(i, m) != 0.0) t.emplace_back(ch.collocation_row + i, ch.coef + m, b_(i, m));
      }
      const double z = pi_min_[ch.node] - x(ch.greville + i);
      t.emplace_back(ch.collocation_row + i, ch.greville + i, pen.derivative(z));
    }
    for (int m = 0; m < nb; ++m) t.emplace_back(ch.expectation_row, ch.coef + m, ints_(m));
    t.emplace_back(ch.expectation_row, ch.slack, 1.0);
  }
  SparseMatrix j(layout_.num_constraints, layout_.num_variables);
  j.setFromTriplets(t.begin(), t.end());
  return j;
}

SparseMatrix OgfModel::hessian(const Vector& x, double sigma, const Vector& y) const {
  std::vector<Triplet> t;
  auto lower_entry = [&](int a, int b, double v) {
    if (a < b) std::swap(a, b);
    t.emplace_back(a, b, v);
  };
  const auto& comps = net_.compressors();
  const std::size_t np = net_.pipes().size();
  const std::size_t ne = net_.num_edges();
  for (int k = 0; k < cells_; ++k) {
    const double m = mass(k);
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const int ia = layout_.alpha[c];
      if (ia < 0) continue;
      const Compressor& comp = comps[c];
      const double a = x(ia);
      const int iphi = layout_.phi(k, np + c);
      lower_entry(ia, ia, sigma * m * comp.eta * comp.m * (comp.m - 1.0) * std::pow(a, comp.m - 2.0) * x(iphi));
      lower_entry(ia, iphi, sigma * m * comp.eta * comp.m * std::pow(a, comp.m - 1.0));
    }
    const int er = layout_.edge_row[static_cast<std::size_t>(k)];
    for (std::size_t e = 0; e < ne; ++e) {
      const Edge& ed = net_.edges()[e];
      const double ye = y(er + static_cast<int>(e));
      if (ed.kind == EdgeKind::Pipe) {
        const int iphi = layout_.phi(k, e);
        lower_entry(iphi, iphi, -ye * kappa_[ed.index] * smooth_.second(x(iphi)));
      } else {
        const int ia = layout_.alpha[ed.index];
        const int ifrom = layout_.pi(k, ed.from);
        if (ia >= 0 && ifrom >= 0) lower_entry(ia, ifrom, -ye);
      }
    }
  }
  const PenaltyConfig& pen = options_.penalty;
  for (const OgfLayout::Chance& ch : layout_.chance) {
    for (int i = 0; i < cells_ + 3; ++i) {
      const double z = pi_min_[ch.node] - x(ch.greville + i);
      const double v = -y(ch.collocation_row + i) * pen.second_derivative(z);
      lower_entry(ch.greville + i, ch.greville + i, v);
    }
  }
  SparseMatrix h(layout_.num_variables, layout_.num_variables);
  h.setFromTriplets(t.begin(), t.end());
  return h;
}

double OgfModel::compressor_power(const Vector& x) const {
  double w = 0.0;
  const std::size_t np = net_.pipes().size();
  for (int k = 0; k < cells_; ++k) {
    for (std::size_t c = 0; c < net_.compressors().size(); ++c) {
      const Compressor& comp = net_.compressors()[c];
      w += mass(k) * comp.eta * (std::pow(alpha(x, c), comp.m) - 1.0) * x(layout_.phi(k, np + c));
    }
  }
  return w * scale_.flow;
}

double OgfModel::economic_value(const Vector& x) const {
  double w = 0.0;
  for (int k = 0; k < cells_; ++k) {
    for (std::size_t j = 0; j < net_.num_nodes(); ++j) {
      const Node& n = net_.nodes()[j];
      if (n.demand_optimized) w += mass(k) * n.demand_price * demand(x, k, j);
      if (n.supply_optimized) w -= mass(k) * n.supply_price * supply(x, k, j);
    }
  }
  w *= scale_.flow;
  if (uncertain_) w += net_.nodes()[*uncertain_].demand_price * r_mean_;
  return w;
}

Vector OgfModel::initial_point() const {
  const OgfLayout& L = layout_;
  Vector x = Vector::Zero(L.num_variables);
  const std::size_t nv = net_.num_nodes();
  const std::size_t ne = net_.num_edges();

  std::vector<double> alpha0(net_.compressors().size(), 1.0);
  std::vector<double> d0(nv, 0.0);
  std::vector<double> s0(nv, 0.0);
  for (std::size_t j = 0; j < nv; ++j) {
    const Node& n = net_.nodes()[j];
    d0[j] = n.demand_optimized ? std::min(n.demand, 0.5 * n.demand_max) : n.demand;
    s0[j] = n.supply_optimized ? std::min(n.supply, 0.5 * n.supply_max) : n.supply;
  }
  if (grid_) {
    // Deterministic solve at the mean load seeds the shared controls.
    try {
      OgfOptions det = options_;
      det.nlp.warm_start.reset();
      const CcSolution sol = solve_deterministic(net_, det);
      if (sol.status == NlpStatus::Optimal) {
        alpha0 = sol.alpha;
        d0 = sol.cells[0].d;
        s0 = sol.cells[0].s;
      }
    } catch (const Error& e) {
      spdlog::debug("ogf: deterministic seed failed: {}", e.what());
    }
  }
  for (std::size_t c = 0; c < alpha0.size(); ++c) {
    if (L.alpha[c] >= 0) x(L.alpha[c]) = alpha0[c];
  }

  std::optional<SteadyState> previous;
  for (int k = 0; k < cells_; ++k) {
    std::vector<double> q(nv);
    for (std::size_t j = 0; j < nv; ++j) {
      q[j] = d0[j] - s0[j] + offset(k, j) * scale_.flow;
      if (L.demand[j] >= 0) x(L.demand_var(k, j)) = d0[j] / scale_.flow;
      if (L.supply[j] >= 0) x(L.supply_var(k, j)) = s0[j] / scale_.flow;
    }
    std::optional<SteadyState> st;
    try {
      st = solve_steady(net_, alpha0, q);
    } catch (const Error& e) {
      spdlog::debug("ogf: steady seed failed in cell {}: {}", k, e.what());
      st = previous;
    }
    for (std::size_t j = 0; j < nv; ++j) {
      const int v = L.pi(k, j);
      if (v >= 0) x(v) = st ? st->pi[j] / scale_.squared_pressure : 1.0;
    }
    for (std::size_t e = 0; e < ne; ++e) x(L.phi(k, e)) = st ? st->phi[e] / scale_.flow : 0.0;
    if (st) previous = st;
  }

  const PenaltyConfig& pen = options_.penalty;
  for (const OgfLayout::Chance& ch : L.chance) {
    const int nb = cells_ + 3;
    Vector cell_pi(cells_);
    for (int k = 0; k < cells_; ++k) cell_pi(k) = x(L.pi(k, ch.node));
    const Vector pg = s_ * cell_pi;
    Vector gam(nb);
    for (int i = 0; i < nb; ++i) gam(i) = pen.value(pi_min_[ch.node] - pg(i));
    const Vector coef = b_.partialPivLu().solve(gam);
    x.segment(ch.greville, nb) = pg;
    x.segment(ch.coef, nb) = coef;
    x(ch.slack) = std::max(ch.epsilon - ints_.dot(coef), 0.0);
  }
  return x;
}

namespace {

OgfProblem make_problem(std::shared_ptr<const OgfModel> model) {
  OgfProblem p;
  p.model = model;
  p.layout = model->layout();
  p.nlp.num_variables = p.layout.num_variables;
  p.nlp.num_constraints = p.layout.num_constraints;
  p.nlp.lower = model->lower();
  p.nlp.upper = model->upper();
  p.nlp.objective = [model](const Vector& x) { return model->objective(x); };
  p.nlp.gradient = [model](const Vector& x) { return model->gradient(x); };
  p.nlp.constraints = [model](const Vector& x) { return model->constraints(x); };
  p.nlp.jacobian = [model](const Vector& x) { return model->jacobian(x); };
  p.nlp.hessian = [model](const Vector& x, double sigma, const Vector& y) {
    return model->hessian(x, sigma, y);
  };
  p.x0 = model->initial_point();
  return p;
}

}  // namespace

OgfProblem assemble_deterministic(const Network& net, const OgfOptions& options) {
  return make_problem(std::make_shared<const OgfModel>(net, nullptr, options));
}

OgfProblem assemble_chance_constrained(const Network& net, std::span<const StochasticGrid> grids,
                                       const OgfOptions& options) {
  if (grids.size() != 1) {
    throw input_error(kModule, "", "exactly one stochastic grid is supported, got " +
                                       std::to_string(grids.size()));
  }
  return make_problem(std::make_shared<const OgfModel>(net, &grids[0], options));
}

std::vector<double> CellSolution::pressure() const {
  std::vector<double> p(pi.size());
  std::transform(pi.begin(), pi.end(), p.begin(), [](double v) { return std::sqrt(std::max(v, 0.0)); });
  return p;
}

double CcSolution::expected_demand(std::size_t node) const {
  double e = 0.0;
  for (const CellSolution& c : cells) e += c.mass * c.d[node];
  return e;
}

double CcSolution::expected_supply(std::size_t node) const {
  double e = 0.0;
  for (const CellSolution& c : cells) e += c.mass * c.s[node];
  return e;
}

CcSolution decode(const OgfProblem& problem, const NlpSolution& solution) {
  const OgfModel& model = *problem.model;
  const OgfLayout& L = problem.layout;
  const Network& net = model.network();
  const Scaling& scale = model.scaling();
  const Vector& x = solution.x;
  const std::size_t nv = net.num_nodes();
  const std::size_t ne = net.num_edges();

  CcSolution out;
  out.status = solution.status;
  out.message = solution.message;
  out.iterations = solution.iterations;
  out.kkt = solution.kkt;
  out.recourse = L.recourse;
  out.gamma = model.options().penalty.gamma;
  out.pi_scale = scale.squared_pressure;
  out.objective = solution.objective * scale.flow;
  out.expected_compressor_power = model.compressor_power(x);
  out.expected_economic_value = model.economic_value(x);
  if (model.stochastic() && model.uncertain_node()) out.uncertain_node = net.nodes()[*model.uncertain_node()].id;

  out.alpha.resize(net.compressors().size());
  for (std::size_t c = 0; c < out.alpha.size(); ++c) out.alpha[c] = model.alpha(x, c);

  out.cells.resize(static_cast<std::size_t>(L.cells));
  for (int k = 0; k < L.cells; ++k) {
    CellSolution& cell = out.cells[static_cast<std::size_t>(k)];
    cell.omega = model.omega(k);
    cell.mass = model.mass(k);
    cell.pi.resize(nv);
    cell.withdrawal.resize(nv);
    cell.d.resize(nv);
    cell.s.resize(nv);
    cell.lambda_q.assign(nv, 0.0);
    cell.lambda_d.assign(nv, 0.0);
    cell.lambda_s.assign(nv, 0.0);
    for (std::size_t j = 0; j < nv; ++j) {
      cell.pi[j] = model.pi(x, k, j) * scale.squared_pressure;
      cell.d[j] = model.demand(x, k, j) * scale.flow;
      cell.s[j] = model.supply(x, k, j) * scale.flow;
      cell.withdrawal[j] = cell.d[j] - cell.s[j] + model.offset(k, j) * scale.flow;
      if (L.pi_slot[j] >= 0) {
        cell.lambda_q[j] = -solution.lambda_eq(L.balance_row[static_cast<std::size_t>(k)] + L.pi_slot[j]);
      }
      if (const int v = L.demand_var(k, j); v >= 0) {
        cell.lambda_d[j] = solution.lambda_hi(v) - solution.lambda_lo(v);
      }
      if (const int v = L.supply_var(k, j); v >= 0) {
        cell.lambda_s[j] = solution.lambda_hi(v) - solution.lambda_lo(v);
      }
    }
    cell.phi.resize(ne);
    for (std::size_t e = 0; e < ne; ++e) cell.phi[e] = x(L.phi(k, e)) * scale.flow;
  }

  for (const OgfLayout::Chance& ch : L.chance) {
    ChanceSolution cs;
    cs.node = net.nodes()[ch.node].id;
    cs.node_index = ch.node;
    cs.epsilon = ch.epsilon;
    const int nb = L.cells + 3;
    cs.coefficients.resize(static_cast<std::size_t>(nb));
    for (int m = 0; m < nb; ++m) cs.coefficients[static_cast<std::size_t>(m)] = x(ch.coef + m);
    cs.sfv_expectation = model.integrals().dot(x.segment(ch.coef, nb));
    cs.lambda_cc = solution.lambda_eq(ch.expectation_row) * scale.flow;
    out.chance.push_back(std::move(cs));
  }
  return out;
}

namespace {

CcSolution solve_problem(const OgfProblem& problem, const NlpOptions& options) {
  const NlpSolution sol = solve(problem.nlp, problem.x0, options);
  spdlog::info("ogf: {} in {} iterations (n={}, m={})", to_string(sol.status), sol.iterations,
               problem.layout.num_variables, problem.layout.num_constraints);
  return decode(problem, sol);
}

}  // namespace

CcSolution solve_deterministic(const Network& net, const OgfOptions& options) {
  return solve_problem(assemble_deterministic(net, options), options.nlp);
}

CcSolution solve_chance_constrained(const Network& net, const StochasticGrid& grid,
                                    const OgfOptions& options) {
  const std::span<const StochasticGrid> grids(&grid, 1);
  return solve_problem(assemble_chance_constrained(net, grids, options), options.nlp);
}

StochasticGrid grid_for(const Network& net, int cells) {
  const std::vector<std::size_t> uncertain = net.uncertain_nodes();
  if (uncertain.empty()) throw input_error(kModule, "", "network has no uncertain node");
  if (uncertain.size() > 1) {
    throw input_error(kModule, "node " + net.nodes()[uncertain[1]].id,
                      "only one uncertain node is supported");
  }
  const Node& n = net.nodes()[uncertain[0]];
  return build_grid(*n.uncertainty, cells, n.id);
}

}  // namespace gasflow
