#include "gasflow/nlp.hpp"

#include "gasflow/error.hpp"

#include <Eigen/SparseCholesky>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace gasflow {

namespace {

constexpr const char* kModule = "nlp_solver";
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Line-search and filter constants (Waechter & Biegler defaults).
constexpr double kGammaTheta = 1e-5;
constexpr double kGammaPhi = 1e-8;
constexpr double kDelta = 1.0;
constexpr double kSTheta = 1.1;
constexpr double kSPhi = 2.3;
constexpr double kEtaPhi = 1e-8;
constexpr double kGammaAlpha = 0.05;
constexpr double kKappaSoc = 0.99;
constexpr int kMaxSoc = 4;
constexpr double kKappaEps = 10.0;
constexpr double kMuFactor = 0.1;
constexpr double kKappaSigma = 1e10;
constexpr double kKappaD = 1e-5;
constexpr double kScaleMax = 100.0;
// Regularisation of the constraint block, removed again by iterative refinement.
constexpr double kDeltaC = 1e-9;

using Triplet = Eigen::Triplet<double>;

/// Regularised symmetric quasi-definite factorisation of the primal-dual matrix
///   [ W + D + dw I   J^T    ]
///   [ J             -dc I   ]
/// with inertia reporting and iterative refinement towards dc = 0.
class KktSolver {
 public:
  bool factor(const SparseMatrix& w_lower, const Vector& diag, const SparseMatrix& jac,
              double delta_w) {
    n_ = diag.size();
    m_ = jac.rows();
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(w_lower.nonZeros() + jac.nonZeros() + n_ + m_));
    for (int k = 0; k < w_lower.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(w_lower, k); it; ++it) {
        if (it.row() >= it.col()) t.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (Eigen::Index i = 0; i < n_; ++i) t.emplace_back(i, i, diag(i) + delta_w);
    for (int k = 0; k < jac.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(jac, k); it; ++it) {
        t.emplace_back(n_ + it.row(), it.col(), it.value());
      }
    }
    for (Eigen::Index j = 0; j < m_; ++j) t.emplace_back(n_ + j, n_ + j, -kDeltaC);
    k_.resize(n_ + m_, n_ + m_);
    k_.setFromTriplets(t.begin(), t.end());
    ldlt_.compute(k_);
    if (ldlt_.info() != Eigen::Success) return false;
    const Vector& d = ldlt_.vectorD();
    Eigen::Index pos = 0;
    Eigen::Index neg = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (!std::isfinite(d(i))) return false;
      if (d(i) > 0.0) ++pos;
      if (d(i) < 0.0) ++neg;
    }
    return pos == n_ && neg == m_;
  }

  Vector solve(const Vector& rhs) const {
    auto apply = [&](const Vector& v) {
      Vector out = k_.selfadjointView<Eigen::Lower>() * v;
      out.tail(m_) += kDeltaC * v.tail(m_);
      return out;
    };
    Vector sol = ldlt_.solve(rhs);
    Vector r = rhs - apply(sol);
    double best = r.lpNorm<Eigen::Infinity>();
    Vector best_sol = sol;
    const double target = 1e-15 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    for (int it = 0; it < 10 && best > target; ++it) {
      sol += ldlt_.solve(r);
      r = rhs - apply(sol);
      const double nr = r.lpNorm<Eigen::Infinity>();
      if (!(nr < best)) break;
      const bool stalled = nr > 0.5 * best;
      best = nr;
      best_sol = sol;
      if (stalled) break;
    }
    return best_sol;
  }

 private:
  Eigen::Index n_ = 0;
  Eigen::Index m_ = 0;
  SparseMatrix k_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower> ldlt_;
};

struct FilterEntry {
  double theta;
  double phi;
};

class InteriorPoint {
 public:
  InteriorPoint(const NlpProblem& p, const NlpOptions& o) : p_(p), opt_(o) {
    n_ = p.num_variables;
    m_ = p.num_constraints;
    validate();
    has_lo_.resize(n_);
    has_hi_.resize(n_);
    for (int i = 0; i < n_; ++i) {
      has_lo_[i] = std::isfinite(p.lower(i));
      has_hi_[i] = std::isfinite(p.upper(i));
    }
    mu_min_ = opt_.tolerance / 10.0;
  }

  NlpSolution run(const Vector& x0);

 private:
  void validate() const {
    if (n_ <= 0) throw input_error(kModule, "", "problem has no variables");
    if (p_.lower.size() != n_ || p_.upper.size() != n_) {
      throw input_error(kModule, "", "bound vectors do not match the variable count");
    }
    if (!p_.objective || !p_.gradient || (m_ > 0 && (!p_.constraints || !p_.jacobian))) {
      throw input_error(kModule, "", "missing problem callbacks");
    }
    for (int i = 0; i < n_; ++i) {
      if (!(p_.lower(i) < p_.upper(i))) {
        throw input_error(kModule, "variable " + std::to_string(i),
                          "lower bound must be strictly below upper bound");
      }
    }
  }

  Vector push_inside(const Vector& x0) const {
    if (x0.size() != n_) throw input_error(kModule, "", "initial point has the wrong size");
    Vector x = x0;
    for (int i = 0; i < n_; ++i) {
      const double lo = p_.lower(i);
      const double hi = p_.upper(i);
      if (!std::isfinite(x(i))) x(i) = 0.0;
      if (has_lo_[i] && has_hi_[i]) {
        const double pl = std::min(opt_.bound_push * std::max(1.0, std::abs(lo)),
                                   opt_.bound_frac * (hi - lo));
        const double pu = std::min(opt_.bound_push * std::max(1.0, std::abs(hi)),
                                   opt_.bound_frac * (hi - lo));
        x(i) = std::clamp(x(i), lo + pl, hi - pu);
      } else if (has_lo_[i]) {
        x(i) = std::max(x(i), lo + opt_.bound_push * std::max(1.0, std::abs(lo)));
      } else if (has_hi_[i]) {
        x(i) = std::min(x(i), hi - opt_.bound_push * std::max(1.0, std::abs(hi)));
      }
    }
    return x;
  }

  Vector slack_lo(const Vector& x) const {
    Vector s = Vector::Ones(n_);
    for (int i = 0; i < n_; ++i) if (has_lo_[i]) s(i) = x(i) - p_.lower(i);
    return s;
  }
  Vector slack_hi(const Vector& x) const {
    Vector s = Vector::Ones(n_);
    for (int i = 0; i < n_; ++i) if (has_hi_[i]) s(i) = p_.upper(i) - x(i);
    return s;
  }

  Vector eval_constraints(const Vector& x) const {
    if (m_ == 0) return Vector(0);
    Vector c = p_.constraints(x);
    if (c.size() != m_) throw input_error(kModule, "", "constraint vector has the wrong size");
    return c;
  }

  SparseMatrix eval_jacobian(const Vector& x) const {
    if (m_ == 0) return SparseMatrix(0, n_);
    SparseMatrix j = p_.jacobian(x);
    if (j.rows() != m_ || j.cols() != n_) {
      throw input_error(kModule, "", "Jacobian has the wrong shape");
    }
    return j;
  }

  [[noreturn]] void evaluation_failure(const Vector& x) const {
    const double f = p_.objective(x);
    if (!std::isfinite(f)) throw numerical_error(kModule, "objective", "non-finite value");
    const Vector g = p_.gradient(x);
    for (int i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g(i))) {
        throw numerical_error(kModule, "gradient " + std::to_string(i), "non-finite value");
      }
    }
    const Vector c = eval_constraints(x);
    for (int i = 0; i < c.size(); ++i) {
      if (!std::isfinite(c(i))) {
        throw numerical_error(kModule, "constraint " + std::to_string(i), "non-finite value");
      }
    }
    const SparseMatrix j = eval_jacobian(x);
    for (int k = 0; k < j.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(j, k); it; ++it) {
        if (!std::isfinite(it.value())) {
          throw numerical_error(kModule, "constraint " + std::to_string(it.row()),
                                "non-finite Jacobian entry");
        }
      }
    }
    throw numerical_error(kModule, "", "non-finite evaluation");
  }

  void evaluate_all(const Vector& x) {
    f_ = p_.objective(x);
    g_ = p_.gradient(x);
    c_ = eval_constraints(x);
    j_ = eval_jacobian(x);
    bool ok = std::isfinite(f_) && g_.allFinite() && c_.allFinite();
    for (int k = 0; ok && k < j_.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(j_, k); it; ++it) ok = ok && std::isfinite(it.value());
    }
    if (!ok) evaluation_failure(x);
  }

  double barrier(double f, const Vector& x) const {
    double phi = f;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) {
        const double s = x(i) - p_.lower(i);
        phi -= mu_ * std::log(s);
        if (!has_hi_[i]) phi += kKappaD * mu_ * s;
      }
      if (has_hi_[i]) {
        const double s = p_.upper(i) - x(i);
        phi -= mu_ * std::log(s);
        if (!has_lo_[i]) phi += kKappaD * mu_ * s;
      }
    }
    return phi;
  }

  Vector barrier_gradient(const Vector& x) const {
    Vector g = g_;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) {
        g(i) -= mu_ / (x(i) - p_.lower(i));
        if (!has_hi_[i]) g(i) += kKappaD * mu_;
      }
      if (has_hi_[i]) {
        g(i) += mu_ / (p_.upper(i) - x(i));
        if (!has_lo_[i]) g(i) -= kKappaD * mu_;
      }
    }
    return g;
  }

  Vector dual_residual() const {
    Vector r = g_ - zl_ + zu_;
    if (m_ > 0) r += j_.transpose() * y_;
    return r;
  }

  /// Scaled optimality error for barrier parameter mu.
  double error(double mu) const {
    const Vector sl = slack_lo(x_);
    const Vector su = slack_hi(x_);
    int nb = 0;
    double zsum = 0.0;
    double compl_err = 0.0;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) {
        ++nb;
        zsum += std::abs(zl_(i));
        compl_err = std::max(compl_err, std::abs(sl(i) * zl_(i) - mu));
      }
      if (has_hi_[i]) {
        ++nb;
        zsum += std::abs(zu_(i));
        compl_err = std::max(compl_err, std::abs(su(i) * zu_(i) - mu));
      }
    }
    const double sd =
        std::max(kScaleMax, (y_.lpNorm<1>() + zsum) / std::max(1, m_ + nb)) / kScaleMax;
    const double sc = std::max(kScaleMax, zsum / std::max(1, nb)) / kScaleMax;
    const double dual = dual_residual().lpNorm<Eigen::Infinity>() / sd;
    const double primal = m_ > 0 ? c_.lpNorm<Eigen::Infinity>() : 0.0;
    return std::max({dual, primal, compl_err / sc});
  }

  double fraction_to_boundary(const Vector& x, const Vector& dx, double tau) const {
    double alpha = 1.0;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i] && dx(i) < 0.0) {
        alpha = std::min(alpha, -tau * (x(i) - p_.lower(i)) / dx(i));
      }
      if (has_hi_[i] && dx(i) > 0.0) {
        alpha = std::min(alpha, tau * (p_.upper(i) - x(i)) / dx(i));
      }
    }
    return alpha;
  }

  double fraction_to_boundary_z(const Vector& dzl, const Vector& dzu, double tau) const {
    double alpha = 1.0;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i] && dzl(i) < 0.0) alpha = std::min(alpha, -tau * zl_(i) / dzl(i));
      if (has_hi_[i] && dzu(i) < 0.0) alpha = std::min(alpha, -tau * zu_(i) / dzu(i));
    }
    return alpha;
  }

  void bound_steps(const Vector& dx, Vector& dzl, Vector& dzu) const {
    dzl = Vector::Zero(n_);
    dzu = Vector::Zero(n_);
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) {
        const double s = x_(i) - p_.lower(i);
        dzl(i) = mu_ / s - zl_(i) - zl_(i) / s * dx(i);
      }
      if (has_hi_[i]) {
        const double s = p_.upper(i) - x_(i);
        dzu(i) = mu_ / s - zu_(i) + zu_(i) / s * dx(i);
      }
    }
  }

  Vector sigma() const {
    Vector d = Vector::Zero(n_);
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) d(i) += zl_(i) / (x_(i) - p_.lower(i));
      if (has_hi_[i]) d(i) += zu_(i) / (p_.upper(i) - x_(i));
    }
    return d;
  }

  SparseMatrix hessian_lower() const {
    if (p_.hessian) {
      SparseMatrix h = p_.hessian(x_, 1.0, y_);
      if (h.rows() != n_ || h.cols() != n_) {
        throw input_error(kModule, "", "Hessian has the wrong shape");
      }
      return h;
    }
    return bfgs_.sparseView();
  }

  bool factor_with_inertia_correction(const SparseMatrix& w, const Vector& diag) {
    if (kkt_.factor(w, diag, j_, 0.0)) {
      delta_w_ = 0.0;
      return true;
    }
    double dw = delta_w_last_ == 0.0 ? 1e-4 : std::max(1e-20, delta_w_last_ / 3.0);
    while (dw < 1e40) {
      if (kkt_.factor(w, diag, j_, dw)) {
        delta_w_ = dw;
        delta_w_last_ = dw;
        return true;
      }
      dw *= delta_w_last_ == 0.0 ? 100.0 : 8.0;
    }
    return false;
  }

  void least_squares_multipliers() {
    y_ = Vector::Zero(m_);
    if (m_ == 0) return;
    KktSolver ls;
    SparseMatrix empty(n_, n_);
    if (!ls.factor(empty, Vector::Ones(n_), j_, 0.0)) return;
    Vector rhs = Vector::Zero(n_ + m_);
    rhs.head(n_) = -(g_ - zl_ + zu_);
    const Vector sol = ls.solve(rhs);
    const Vector y = sol.tail(m_);
    if (y.allFinite() && y.lpNorm<Eigen::Infinity>() <= 1e3) y_ = y;
  }

  bool filter_rejects(double theta, double phi) const {
    for (const FilterEntry& e : filter_) {
      if (theta >= e.theta && phi >= e.phi) return true;
    }
    return false;
  }

  bool acceptable(double theta_t, double phi_t, double alpha, double theta, double phi, double dphi,
                  bool& ftype) const {
    ftype = false;
    if (!std::isfinite(theta_t) || !std::isfinite(phi_t)) return false;
    if (theta_t > theta_max_) return false;
    if (filter_rejects(theta_t, phi_t)) return false;
    const bool switching =
        dphi < 0.0 && alpha * std::pow(-dphi, kSPhi) > kDelta * std::pow(theta, kSTheta);
    if (theta <= theta_min_ && switching) {
      ftype = true;
      return phi_t <= phi + kEtaPhi * alpha * dphi + 10.0 * kEps * std::abs(phi);
    }
    return theta_t <= (1.0 - kGammaTheta) * theta || phi_t <= phi - kGammaPhi * theta;
  }

  bool restoration();
  void bfgs_update(const Vector& x_old, const Vector& grad_lag_old);
  void reset_filter() {
    filter_.clear();
  }

  const NlpProblem& p_;
  NlpOptions opt_;
  int n_ = 0;
  int m_ = 0;
  std::vector<bool> has_lo_;
  std::vector<bool> has_hi_;

  Vector x_, y_, zl_, zu_;
  double f_ = 0.0;
  Vector g_, c_;
  SparseMatrix j_;

  double mu_ = 0.1;
  double mu_min_ = 1e-9;
  double tau_ = 0.99;
  double theta_max_ = 1e4;
  double theta_min_ = 1e-4;
  std::vector<FilterEntry> filter_;
  double delta_w_ = 0.0;
  double delta_w_last_ = 0.0;
  KktSolver kkt_;
  Eigen::MatrixXd bfgs_;
};

bool InteriorPoint::restoration() {
  const double theta_start = m_ > 0 ? c_.lpNorm<1>() : 0.0;
  const double phi_start = barrier(f_, x_);
  filter_.push_back({(1.0 - kGammaTheta) * theta_start, phi_start - kGammaPhi * theta_start});
  spdlog::debug("nlp: entering restoration, theta={:.3e}", theta_start);
  for (int it = 0; it < 200; ++it) {
    const double theta = c_.lpNorm<1>();
    Vector diag = sigma();
    const double prox = std::max(1e-6, std::sqrt(mu_));
    diag.array() += prox;
    SparseMatrix empty(n_, n_);
    KktSolver solver;
    if (!solver.factor(empty, diag, j_, 0.0)) return false;
    Vector rhs = Vector::Zero(n_ + m_);
    rhs.tail(m_) = -c_;
    const Vector sol = solver.solve(rhs);
    const Vector dx = sol.head(n_);
    double alpha = fraction_to_boundary(x_, dx, tau_);
    bool moved = false;
    while (alpha > 1e-10) {
      const Vector xt = x_ + alpha * dx;
      const Vector ct = eval_constraints(xt);
      const double tt = ct.allFinite() ? ct.lpNorm<1>() : kInfinity;
      if (tt <= (1.0 - 1e-4 * alpha) * theta) {
        x_ = xt;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) return false;
    // Re-centre the bound multipliers on the new point.
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) zl_(i) = std::min(std::max(zl_(i), mu_ / (x_(i) - p_.lower(i)) * 1e-2), mu_ / (x_(i) - p_.lower(i)) * 1e2);
      if (has_hi_[i]) zu_(i) = std::min(std::max(zu_(i), mu_ / (p_.upper(i) - x_(i)) * 1e-2), mu_ / (p_.upper(i) - x_(i)) * 1e2);
    }
    evaluate_all(x_);
    const double theta_new = c_.lpNorm<1>();
    const double phi_new = barrier(f_, x_);
    if (theta_new <= 0.9 * theta_start && !filter_rejects(theta_new, phi_new)) {
      least_squares_multipliers();
      return true;
    }
    if (theta_new <= opt_.tolerance * 1e-2) {
      least_squares_multipliers();
      return !filter_rejects(theta_new, phi_new);
    }
  }
  return false;
}

void InteriorPoint::bfgs_update(const Vector& x_old, const Vector& grad_lag_old) {
  const Vector s = x_ - x_old;
  Vector grad_lag_new = g_;
  if (m_ > 0) grad_lag_new += j_.transpose() * y_;
  const Vector yv = grad_lag_new - grad_lag_old;
  const double sn = s.norm();
  if (sn < 1e-14 * (1.0 + x_.norm())) return;
  const Vector bs = bfgs_ * s;
  const double sbs = s.dot(bs);
  const double sy = s.dot(yv);
  if (sbs <= 0.0) return;
  Vector r = yv;
  double sr = sy;
  if (sy < 0.2 * sbs) {
    const double theta = 0.8 * sbs / (sbs - sy);
    r = theta * yv + (1.0 - theta) * bs;
    sr = s.dot(r);
  }
  bfgs_ += r * r.transpose() / sr - bs * bs.transpose() / sbs;
}

NlpSolution InteriorPoint::run(const Vector& x0) {
  x_ = push_inside(x0);
  zl_ = Vector::Zero(n_);
  zu_ = Vector::Zero(n_);
  for (int i = 0; i < n_; ++i) {
    if (has_lo_[i]) zl_(i) = 1.0;
    if (has_hi_[i]) zu_(i) = 1.0;
  }
  mu_ = opt_.mu_init;
  evaluate_all(x_);
  if (opt_.warm_start) {
    const WarmStart& ws = *opt_.warm_start;
    if (ws.lambda_eq.size() != m_ || ws.lambda_lo.size() != n_ || ws.lambda_hi.size() != n_) {
      throw input_error(kModule, "", "warm start multipliers have the wrong size");
    }
    y_ = ws.lambda_eq;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) zl_(i) = std::max(ws.lambda_lo(i), 1e-20);
      if (has_hi_[i]) zu_(i) = std::max(ws.lambda_hi(i), 1e-20);
    }
  } else {
    least_squares_multipliers();
  }
  if (!p_.hessian) bfgs_ = Eigen::MatrixXd::Identity(n_, n_);

  tau_ = std::max(0.99, 1.0 - mu_);
  const double theta0 = m_ > 0 ? c_.lpNorm<1>() : 0.0;
  theta_max_ = 1e4 * std::max(1.0, theta0);
  theta_min_ = 1e-4 * std::max(1.0, theta0);

  NlpSolution sol;
  bool force_mu_decrease = false;
  int iter = 0;
  for (;; ++iter) {
    const double e0 = error(0.0);
    if (e0 <= opt_.tolerance) {
      sol.status = NlpStatus::Optimal;
      break;
    }
    if (iter >= opt_.max_iterations) {
      sol.status = NlpStatus::MaxIter;
      sol.message = "iteration limit reached";
      break;
    }
    while (mu_ > mu_min_ && (force_mu_decrease || error(mu_) <= kKappaEps * mu_)) {
      mu_ = std::max(mu_min_, kMuFactor * mu_);
      tau_ = std::max(0.99, 1.0 - mu_);
      reset_filter();
      force_mu_decrease = false;
    }
    force_mu_decrease = false;

    const SparseMatrix w = hessian_lower();
    const Vector diag = sigma();
    if (!factor_with_inertia_correction(w, diag)) {
      sol.status = NlpStatus::Infeasible;
      sol.message = "KKT matrix could not be regularised";
      break;
    }
    const Vector grad_phi = barrier_gradient(x_);
    Vector rhs(n_ + m_);
    rhs.head(n_) = -grad_phi;
    if (m_ > 0) {
      rhs.head(n_) -= j_.transpose() * y_;
      rhs.tail(m_) = -c_;
    }
    const Vector step = kkt_.solve(rhs);
    Vector dx = step.head(n_);
    Vector dy = step.tail(m_);
    if (!dx.allFinite() || !dy.allFinite()) {
      sol.status = NlpStatus::Infeasible;
      sol.message = "non-finite search direction";
      break;
    }
    Vector dzl, dzu;
    bound_steps(dx, dzl, dzu);

    const double theta = m_ > 0 ? c_.lpNorm<1>() : 0.0;
    const double phi = barrier(f_, x_);
    const double dphi = grad_phi.dot(dx);
    const double alpha_max = fraction_to_boundary(x_, dx, tau_);

    Vector x_new;
    double f_new = 0.0;
    Vector c_new;
    double alpha_primal = alpha_max;
    bool accepted = false;
    bool ftype = false;

    const bool tiny = dx.lpNorm<Eigen::Infinity>() <=
                      10.0 * kEps * (1.0 + x_.lpNorm<Eigen::Infinity>());
    if (tiny) {
      x_new = x_ + alpha_max * dx;
      f_new = p_.objective(x_new);
      c_new = eval_constraints(x_new);
      accepted = std::isfinite(f_new) && c_new.allFinite();
      force_mu_decrease = true;
    } else {
      double alpha_min = kGammaAlpha * kGammaTheta;
      if (dphi < 0.0) {
        alpha_min = std::min(kGammaTheta, kGammaPhi * theta / -dphi);
        if (theta <= theta_min_) {
          alpha_min = std::min(alpha_min, kDelta * std::pow(theta, kSTheta) / std::pow(-dphi, kSPhi));
        }
        alpha_min *= kGammaAlpha;
      }
      double alpha = alpha_max;
      for (int ls = 0; !accepted; ++ls) {
        const Vector xt = x_ + alpha * dx;
        const double ft = p_.objective(xt);
        const Vector ct = eval_constraints(xt);
        const bool finite = std::isfinite(ft) && ct.allFinite();
        const double theta_t = finite ? (m_ > 0 ? ct.lpNorm<1>() : 0.0) : kInfinity;
        const double phi_t = finite ? barrier(ft, xt) : kInfinity;
        if (finite && acceptable(theta_t, phi_t, alpha, theta, phi, dphi, ftype)) {
          x_new = xt;
          f_new = ft;
          c_new = ct;
          alpha_primal = alpha;
          accepted = true;
          break;
        }
        if (ls == 0 && finite && m_ > 0 && theta_t >= theta) {
          // Second-order correction.
          Vector c_soc = alpha * c_ + ct;
          double theta_soc_prev = theta;
          for (int k = 0; k < kMaxSoc; ++k) {
            Vector rhs_soc = rhs;
            rhs_soc.tail(m_) = -c_soc;
            const Vector s2 = kkt_.solve(rhs_soc);
            const Vector dx_soc = s2.head(n_);
            const double a_soc = fraction_to_boundary(x_, dx_soc, tau_);
            const Vector xs = x_ + a_soc * dx_soc;
            const double fs = p_.objective(xs);
            const Vector cs = eval_constraints(xs);
            if (!(std::isfinite(fs) && cs.allFinite())) break;
            const double theta_s = cs.lpNorm<1>();
            const double phi_s = barrier(fs, xs);
            if (acceptable(theta_s, phi_s, alpha, theta, phi, dphi, ftype)) {
              dx = dx_soc;
              dy = s2.tail(m_);
              bound_steps(dx, dzl, dzu);
              x_new = xs;
              f_new = fs;
              c_new = cs;
              alpha_primal = a_soc;
              accepted = true;
              break;
            }
            if (theta_s > kKappaSoc * theta_soc_prev) break;
            theta_soc_prev = theta_s;
            c_soc = a_soc * c_soc + cs;
          }
          if (accepted) break;
        }
        alpha *= 0.5;
        if (alpha < alpha_min) break;
      }
      if (accepted && !ftype) {
        filter_.push_back({(1.0 - kGammaTheta) * theta, phi - kGammaPhi * theta});
      }
    }

    if (!accepted) {
      if (theta <= opt_.tolerance && mu_ > mu_min_) {
        // Feasible but stuck on this barrier subproblem: move on to a smaller mu.
        force_mu_decrease = true;
        continue;
      }
      if (!restoration()) {
        sol.status = NlpStatus::Infeasible;
        sol.message = "restoration failed to reduce the constraint violation";
        break;
      }
      continue;
    }

    const Vector x_old = x_;
    Vector grad_lag_old;
    const double alpha_z = fraction_to_boundary_z(dzl, dzu, tau_);
    x_ = x_new;
    y_ += alpha_primal * dy;
    zl_ += alpha_z * dzl;
    zu_ += alpha_z * dzu;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) {
        const double s = x_(i) - p_.lower(i);
        zl_(i) = std::max(std::min(zl_(i), kKappaSigma * mu_ / s), mu_ / (kKappaSigma * s));
      }
      if (has_hi_[i]) {
        const double s = p_.upper(i) - x_(i);
        zu_(i) = std::max(std::min(zu_(i), kKappaSigma * mu_ / s), mu_ / (kKappaSigma * s));
      }
    }
    if (!p_.hessian) {
      grad_lag_old = g_;
      if (m_ > 0) grad_lag_old += j_.transpose() * y_;
    }
    f_ = f_new;
    c_ = c_new;
    g_ = p_.gradient(x_);
    j_ = eval_jacobian(x_);
    if (!g_.allFinite()) evaluation_failure(x_);
    if (!p_.hessian) bfgs_update(x_old, grad_lag_old);

    spdlog::trace("nlp it={} f={:.10e} theta={:.2e} mu={:.1e} alpha={:.2e} dw={:.1e}", iter, f_,
                  m_ > 0 ? c_.lpNorm<Eigen::Infinity>() : 0.0, mu_, alpha_primal, delta_w_);
  }

  sol.x = x_;
  sol.lambda_eq = y_;
  sol.lambda_lo = zl_;
  sol.lambda_hi = zu_;
  sol.objective = f_;
  sol.iterations = iter;
  sol.kkt = kkt_residuals(p_, x_, y_, zl_, zu_);
  sol.kkt.scaled_error = error(0.0);
  spdlog::debug("nlp: {} after {} iterations, objective {:.12e}, error {:.2e}",
                to_string(sol.status), iter, f_, sol.kkt.scaled_error);
  return sol;
}

}  // namespace

const char* to_string(NlpStatus status) {
  switch (status) {
    case NlpStatus::Optimal:
      return "Optimal";
    case NlpStatus::MaxIter:
      return "MaxIter";
    case NlpStatus::Infeasible:
      return "Infeasible";
  }
  return "Unknown";
}

NlpSolution solve(const NlpProblem& problem, const Vector& x0, const NlpOptions& options) {
  InteriorPoint ipm(problem, options);
  return ipm.run(x0);
}

KktResiduals kkt_residuals(const NlpProblem& problem, const Vector& x, const Vector& lambda_eq,
                           const Vector& lambda_lo, const Vector& lambda_hi) {
  KktResiduals r;
  Vector stat = problem.gradient(x) - lambda_lo + lambda_hi;
  if (problem.num_constraints > 0) {
    const Vector c = problem.constraints(x);
    stat += problem.jacobian(x).transpose() * lambda_eq;
    r.feasibility = c.lpNorm<Eigen::Infinity>();
  }
  r.stationarity = stat.lpNorm<Eigen::Infinity>();
  for (int i = 0; i < x.size(); ++i) {
    if (std::isfinite(problem.lower(i))) {
      r.complementarity = std::max(r.complementarity, std::abs(lambda_lo(i) * (x(i) - problem.lower(i))));
    }
    if (std::isfinite(problem.upper(i))) {
      r.complementarity = std::max(r.complementarity, std::abs(lambda_hi(i) * (problem.upper(i) - x(i))));
    }
  }
  return r;
}

double check_derivatives(const NlpProblem& problem, const Vector& x) {
  const int n = problem.num_variables;
  const Vector g = problem.gradient(x);
  const Eigen::MatrixXd jac =
      problem.num_constraints > 0 ? Eigen::MatrixXd(problem.jacobian(x)) : Eigen::MatrixXd(0, n);
  double worst = 0.0;
  auto rel = [](double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
  };
  for (int i = 0; i < n; ++i) {
    // Nearest power of two to 1e-6 (1 + |x_i|), so that x_i +- h is exact for short mantissas.
    const double h = std::exp2(std::round(std::log2(1e-6 * (1.0 + std::abs(x(i))))));
    Vector xp = x;
    Vector xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double width = xp(i) - xm(i);
    const double fd = (problem.objective(xp) - problem.objective(xm)) / width;
    worst = std::max(worst, rel(g(i), fd));
    if (problem.num_constraints > 0) {
      const Vector cd = (problem.constraints(xp) - problem.constraints(xm)) / width;
      for (int r = 0; r < problem.num_constraints; ++r) worst = std::max(worst, rel(jac(r, i), cd(r)));
    }
  }
  return worst;
}

}  // namespace gasflow
