#include "gasflow/steady.hpp"

#include "gasflow/error.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace gasflow {

namespace {

constexpr const char* kModule = "steady_solver";

/// Nondimensional square system in the unknowns [Pi of non-slack nodes, phi of edges].
class SteadySystem {
 public:
  SteadySystem(const Network& net, const Scaling& scale, std::span<const double> alpha,
               std::span<const double> withdrawal)
      : net_(net), scale_(scale), alpha_(alpha.begin(), alpha.end()) {
    const std::size_t nv = net.num_nodes();
    pi_index_.assign(nv, -1);
    int next = 0;
    for (std::size_t i = 0; i < nv; ++i) {
      if (i != net.slack_index()) pi_index_[i] = next++;
    }
    n_pi_ = next;
    q_.resize(nv);
    for (std::size_t i = 0; i < nv; ++i) q_[i] = withdrawal[i] / scale.flow;
    const Node& slack = net.nodes()[net.slack_index()];
    pi_slack_ = slack.slack_pressure * slack.slack_pressure / scale.squared_pressure;
    kappa_.resize(net.pipes().size());
    for (std::size_t k = 0; k < kappa_.size(); ++k) {
      kappa_[k] = net.resistances()[k] / scale.resistance();
    }
  }

  int size() const { return n_pi_ + static_cast<int>(net_.num_edges()); }
  int pi_offset(std::size_t node) const { return pi_index_[node]; }
  int phi_offset(std::size_t edge) const { return n_pi_ + static_cast<int>(edge); }
  double pi_slack() const { return pi_slack_; }
  double pi(const Eigen::VectorXd& u, std::size_t node) const {
    return pi_index_[node] < 0 ? pi_slack_ : u(pi_index_[node]);
  }

  Eigen::VectorXd residual(const Eigen::VectorXd& u) const {
    Eigen::VectorXd f(size());
    const std::size_t ne = net_.num_edges();
    for (std::size_t k = 0; k < ne; ++k) {
      const Edge& e = net_.edges()[k];
      const double phi = u(phi_offset(k));
      if (e.kind == EdgeKind::Pipe) {
        f(static_cast<Eigen::Index>(k)) =
            pi(u, e.from) - pi(u, e.to) - kappa_[e.index] * phi * std::abs(phi);
      } else {
        f(static_cast<Eigen::Index>(k)) = pi(u, e.to) - alpha_[e.index] * pi(u, e.from);
      }
    }
    Eigen::VectorXd balance = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net_.num_nodes()));
    for (std::size_t k = 0; k < ne; ++k) {
      const Edge& e = net_.edges()[k];
      balance(static_cast<Eigen::Index>(e.to)) += u(phi_offset(k));
      balance(static_cast<Eigen::Index>(e.from)) -= u(phi_offset(k));
    }
    for (std::size_t i = 0; i < net_.num_nodes(); ++i) {
      if (pi_index_[i] >= 0) {
        f(static_cast<Eigen::Index>(ne) + pi_index_[i]) = balance(static_cast<Eigen::Index>(i)) - q_[i];
      }
    }
    return f;
  }

  /// `floor` bounds |phi| away from zero in the pipe derivative so that loops with
  /// stagnant flow keep a non-singular Jacobian.
  Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& u, double floor = 0.0) const {
    std::vector<Eigen::Triplet<double>> t;
    const std::size_t ne = net_.num_edges();
    auto add_pi = [&](int row, std::size_t node, double v) {
      if (pi_index_[node] >= 0) t.emplace_back(row, pi_index_[node], v);
    };
    for (std::size_t k = 0; k < ne; ++k) {
      const Edge& e = net_.edges()[k];
      const int row = static_cast<int>(k);
      if (e.kind == EdgeKind::Pipe) {
        add_pi(row, e.from, 1.0);
        add_pi(row, e.to, -1.0);
        const double phi = u(phi_offset(k));
        t.emplace_back(row, phi_offset(k), -2.0 * kappa_[e.index] * std::max(std::abs(phi), floor));
      } else {
        add_pi(row, e.to, 1.0);
        add_pi(row, e.from, -alpha_[e.index]);
      }
    }
    for (std::size_t k = 0; k < ne; ++k) {
      const Edge& e = net_.edges()[k];
      if (pi_index_[e.to] >= 0) t.emplace_back(static_cast<int>(ne) + pi_index_[e.to], phi_offset(k), 1.0);
      if (pi_index_[e.from] >= 0) t.emplace_back(static_cast<int>(ne) + pi_index_[e.from], phi_offset(k), -1.0);
    }
    Eigen::SparseMatrix<double> j(size(), size());
    j.setFromTriplets(t.begin(), t.end());
    return j;
  }

  /// Slack pressure everywhere; flows routed along a BFS spanning tree rooted at the slack.
  Eigen::VectorXd initial_guess() const {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(size());
    for (std::size_t i = 0; i < net_.num_nodes(); ++i) {
      if (pi_index_[i] >= 0) u(pi_index_[i]) = pi_slack_;
    }
    const std::size_t nv = net_.num_nodes();
    std::vector<std::vector<std::size_t>> incident(nv);
    for (std::size_t k = 0; k < net_.num_edges(); ++k) {
      incident[net_.edges()[k].from].push_back(k);
      incident[net_.edges()[k].to].push_back(k);
    }
    std::vector<long> parent_edge(nv, -1);
    std::vector<bool> seen(nv, false);
    std::vector<std::size_t> order;
    std::queue<std::size_t> todo;
    todo.push(net_.slack_index());
    seen[net_.slack_index()] = true;
    while (!todo.empty()) {
      const std::size_t v = todo.front();
      todo.pop();
      order.push_back(v);
      for (std::size_t k : incident[v]) {
        const Edge& e = net_.edges()[k];
        const std::size_t w = e.from == v ? e.to : e.from;
        if (!seen[w]) {
          seen[w] = true;
          parent_edge[w] = static_cast<long>(k);
          todo.push(w);
        }
      }
    }
    std::vector<double> subtree(q_);
    subtree[net_.slack_index()] = 0.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t v = *it;
      if (parent_edge[v] < 0) continue;
      const auto k = static_cast<std::size_t>(parent_edge[v]);
      const Edge& e = net_.edges()[k];
      const std::size_t p = e.from == v ? e.to : e.from;
      u(phi_offset(k)) = e.to == v ? subtree[v] : -subtree[v];
      subtree[p] += subtree[v];
    }
    return u;
  }

 private:
  const Network& net_;
  Scaling scale_;
  std::vector<double> alpha_;
  std::vector<int> pi_index_;
  int n_pi_ = 0;
  std::vector<double> q_;
  std::vector<double> kappa_;
  double pi_slack_ = 1.0;
};

void check_inputs(const Network& net, std::span<const double> alpha,
                  std::span<const double> withdrawal) {
  if (alpha.size() != net.compressors().size()) {
    throw input_error(kModule, "", "expected one ratio per compressor");
  }
  if (withdrawal.size() != net.num_nodes()) {
    throw input_error(kModule, "", "expected one withdrawal per node");
  }
  for (std::size_t c = 0; c < alpha.size(); ++c) {
    const Compressor& comp = net.compressors()[c];
    if (!(alpha[c] >= 1.0 - 1e-12 && alpha[c] <= comp.alpha_max + 1e-12)) {
      std::ostringstream msg;
      msg << "ratio " << alpha[c] << " outside [1, " << comp.alpha_max << "]";
      throw input_error(kModule, "compressor " + comp.id, msg.str());
    }
  }
  for (std::size_t i = 0; i < withdrawal.size(); ++i) {
    if (!std::isfinite(withdrawal[i])) {
      throw input_error(kModule, "node " + net.nodes()[i].id, "non-finite withdrawal");
    }
  }
}

SteadyState unpack(const Network& net, const Scaling& scale, const SteadySystem& sys,
                   const Eigen::VectorXd& u) {
  SteadyState s;
  s.pi.resize(net.num_nodes());
  s.phi.resize(net.num_edges());
  for (std::size_t i = 0; i < net.num_nodes(); ++i) s.pi[i] = sys.pi(u, i) * scale.squared_pressure;
  for (std::size_t k = 0; k < net.num_edges(); ++k) s.phi[k] = u(sys.phi_offset(k)) * scale.flow;
  double slack_balance = 0.0;
  for (std::size_t k = 0; k < net.num_edges(); ++k) {
    const Edge& e = net.edges()[k];
    if (e.to == net.slack_index()) slack_balance += s.phi[k];
    if (e.from == net.slack_index()) slack_balance -= s.phi[k];
  }
  s.slack_withdrawal = slack_balance;
  return s;
}

}  // namespace

std::vector<double> SteadyState::pressure() const {
  std::vector<double> p(pi.size());
  std::transform(pi.begin(), pi.end(), p.begin(), [](double v) { return std::sqrt(std::max(v, 0.0)); });
  return p;
}

Scaling nondimensionalize(const Network& net) {
  Scaling s;
  const Node& slack = net.nodes()[net.slack_index()];
  s.pressure = slack.slack_pressure;
  s.squared_pressure = s.pressure * s.pressure;
  s.velocity = net.wave_speed();
  double kappa_max = 0.0;
  double length_max = 0.0;
  for (std::size_t k = 0; k < net.pipes().size(); ++k) {
    kappa_max = std::max(kappa_max, net.resistances()[k]);
    length_max = std::max(length_max, net.pipes()[k].length);
  }
  if (kappa_max > 0.0) {
    s.flow = std::sqrt(s.squared_pressure / kappa_max);
    s.length = length_max;
  } else {
    double q = 0.0;
    for (const Node& n : net.nodes()) q = std::max({q, n.demand, n.supply});
    s.flow = q > 0.0 ? q : 1.0;
  }
  return s;
}

SteadyState solve_steady(const Network& net, std::span<const double> alpha,
                         std::span<const double> withdrawal, const SteadyOptions& options) {
  check_inputs(net, alpha, withdrawal);
  const Scaling scale = nondimensionalize(net);
  SteadySystem sys(net, scale, alpha, withdrawal);

  Eigen::VectorXd u = sys.initial_guess();
  Eigen::VectorXd f = sys.residual(u);
  double norm = f.lpNorm<Eigen::Infinity>();
  std::vector<double> history{norm};
  int iter = 0;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  while (norm > options.tolerance) {
    if (iter >= options.max_iterations) {
      std::ostringstream msg;
      msg << "Newton did not converge in " << options.max_iterations
          << " iterations (last residual " << norm << ")";
      throw numerical_error(kModule, "", msg.str());
    }
    Eigen::SparseMatrix<double> jac = sys.jacobian(u);
    lu.compute(jac);
    if (lu.info() != Eigen::Success) {
      lu.compute(sys.jacobian(u, 1e-6));
      if (lu.info() != Eigen::Success) {
        throw numerical_error(kModule, "", "singular Newton Jacobian");
      }
    }
    const Eigen::VectorXd du = lu.solve(-f);
    // Armijo backtracking on the Euclidean residual norm.
    const double f2 = f.norm();
    double step = 1.0;
    Eigen::VectorXd trial;
    Eigen::VectorXd f_trial;
    while (true) {
      trial = u + step * du;
      f_trial = sys.residual(trial);
      if (f_trial.allFinite() && f_trial.norm() <= (1.0 - 1e-4 * step) * f2) break;
      step *= 0.5;
      if (step < options.min_step) {
        std::ostringstream msg;
        msg << "line search stalled at residual " << norm;
        throw numerical_error(kModule, "", msg.str());
      }
    }
    u = trial;
    f = f_trial;
    norm = f.lpNorm<Eigen::Infinity>();
    history.push_back(norm);
    ++iter;
  }

  SteadyState state = unpack(net, scale, sys, u);
  state.residual_norm = norm;
  state.iterations = iter;
  state.residual_history = std::move(history);
  for (std::size_t i = 0; i < net.num_nodes(); ++i) {
    if (state.pi[i] < 0.0) {
      std::ostringstream msg;
      msg << "negative squared pressure " << state.pi[i] << " Pa^2: operating point infeasible";
      throw numerical_error(kModule, "node " + net.nodes()[i].id, msg.str());
    }
  }
  return state;
}

Eigen::MatrixXd steady_jacobian(const Network& net, std::span<const double> alpha,
                                const SteadyState& state, bool scaled) {
  std::vector<double> q(net.num_nodes(), 0.0);
  const Scaling unit{};
  const Scaling scale = scaled ? nondimensionalize(net) : unit;
  SteadySystem sys(net, scale, alpha, q);
  Eigen::VectorXd u(sys.size());
  for (std::size_t i = 0; i < net.num_nodes(); ++i) {
    if (sys.pi_offset(i) >= 0) u(sys.pi_offset(i)) = state.pi[i] / scale.squared_pressure;
  }
  for (std::size_t k = 0; k < net.num_edges(); ++k) u(sys.phi_offset(k)) = state.phi[k] / scale.flow;
  return Eigen::MatrixXd(sys.jacobian(u));
}

}  // namespace gasflow
