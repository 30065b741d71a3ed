#pragma once

// Primal-dual interior-point solver for NlpProblem.
//
// Inequalities are slacked (c_ineq(x) + s = 0, s > 0), bounds and slacks
// carry log barriers, and the barrier parameter follows a monotone
// Fiacco-McCormick schedule. Each step solves the symmetric indefinite
// KKT system
//
//   [ W + Sigma_x + dw*I   J_eq^T      J_ineq^T      ] [dx ]   [ -r_x ]
//   [ J_eq                 -dc*I       0             ] [dye] = [ -c_eq]
//   [ J_ineq               0           -S/Y_ineq     ] [dyi]   [ -c_ineq - mu/y_ineq ]
//
// with a backtracking Armijo line search on the classic barrier merit
// function and diagonal regularization escalated geometrically whenever
// the factorization fails or the direction is not a descent direction.
// Fixed variables (lower == upper) are held by internal equality rows
// instead of barrier terms.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "acdcopf/nlp.hpp"
#include "acdcopf/network.hpp"

namespace acdcopf {

class InteriorPointSolver {
 public:
  explicit InteriorPointSolver(const NlpProblem& problem, IpmOptions opts = {})
      : p_(problem), opts_(opts) {}

  NlpSolution solve(const NlpSolution* warm = nullptr) {
    setup(warm);
    NlpSolution sol;
    sol.log.reserve(opts_.collect_log ? static_cast<size_t>(opts_.max_iterations) : 0);

    int stall = 0;
    double theta_best = kInf;

    for (int iter = 0; iter < opts_.max_iterations; ++iter) {
      evaluate();

      const double e0 = kkt_error(0.0);
      if (e0 <= opts_.tol) return finish(sol, NlpStatus::Converged, iter);

      while (mu_ > mu_min() && kkt_error(mu_) <= kappa_eps_ * mu_)
        mu_ = std::max(mu_min(), std::min(0.2 * mu_, std::pow(mu_, 1.5)));

      // Stagnating primal infeasibility is the infeasibility certificate
      // heuristic: the barrier subproblems stop making progress on theta.
      const double theta = c_all_.lpNorm<1>();
      if (theta > std::max(1e-6, 1e3 * opts_.tol)) {
        if (theta > 0.999 * theta_best) {
          if (++stall >= 25) return finish(sol, NlpStatus::Infeasible, iter);
        } else {
          stall = 0;
        }
      } else {
        stall = 0;
      }
      theta_best = std::min(theta_best, theta);

      if (!compute_and_take_step(sol, iter)) {
        // A step that cannot be salvaged by regularization while the
        // primal residual is large and not improving is the practical
        // infeasibility certificate.
        const bool infeasible_looking =
            theta > std::max(1e-6, 1e3 * opts_.tol) && theta > 0.9 * theta_best;
        return finish(sol, infeasible_looking ? NlpStatus::Infeasible : NlpStatus::NumericalFailure,
                      iter);
      }
    }
    evaluate();
    if (kkt_error(0.0) <= opts_.tol)
      return finish(sol, NlpStatus::Converged, opts_.max_iterations);
    return finish(sol, NlpStatus::MaxIterations, opts_.max_iterations);
  }

 private:
  static constexpr double kappa_eps_ = 10.0;
  static constexpr double kappa_sigma_ = 1e10;

  const NlpProblem& p_;
  IpmOptions opts_;

  int n_ = 0, m_ineq_ = 0, m_eq_user_ = 0, m_eq_ = 0;
  std::vector<int> fixed_;              // variables with lower == upper
  std::vector<char> is_fixed_;
  std::vector<int> lo_idx_, up_idx_;    // variables with a finite, non-fixed bound

  VectorXd x_, s_, y_eq_, y_ineq_, z_lo_, z_up_;
  double mu_ = 0.1, nu_ = 1.0, delta_w_last_ = 0.0;

  // Evaluations at x_.
  double f_ = 0.0;
  VectorXd g_, c_eq_, c_ineq_, c_all_;
  SparseReal j_eq_, j_ineq_;

  Eigen::MatrixXd bfgs_;

  double mu_min() const { return std::max(1e-13, opts_.tol / 11.0); }

  double lo(int i) const { return p_.lower(i); }
  double up(int i) const { return p_.upper(i); }

  void setup(const NlpSolution* warm) {
    n_ = p_.num_vars;
    m_ineq_ = p_.num_ineq;
    m_eq_user_ = p_.num_eq;
    fixed_.clear();
    lo_idx_.clear();
    up_idx_.clear();
    is_fixed_.assign(static_cast<size_t>(n_), 0);
    for (int i = 0; i < n_; ++i) {
      if (lo(i) == up(i)) {
        fixed_.push_back(i);
        is_fixed_[static_cast<size_t>(i)] = 1;
      } else {
        if (std::isfinite(lo(i))) lo_idx_.push_back(i);
        if (std::isfinite(up(i))) up_idx_.push_back(i);
      }
    }
    m_eq_ = m_eq_user_ + static_cast<int>(fixed_.size());

    x_ = warm ? warm->x : p_.x0;
    push_interior();

    mu_ = opts_.mu_init;
    nu_ = 1.0;
    delta_w_last_ = 0.0;
    bfgs_ = Eigen::MatrixXd::Identity(n_, n_);

    if (m_ineq_ > 0) {
      VectorXd ci = p_.ineq_constraints(x_);
      s_ = (-ci.array()).max(1e-6).matrix();
    } else {
      s_.resize(0);
    }

    y_eq_ = VectorXd::Zero(m_eq_);
    y_ineq_ = VectorXd::Zero(m_ineq_);
    z_lo_ = VectorXd::Zero(n_);
    z_up_ = VectorXd::Zero(n_);
    if (warm) {
      if (warm->y_eq.size() == m_eq_user_) y_eq_.head(m_eq_user_) = warm->y_eq;
      if (warm->y_ineq.size() == m_ineq_)
        y_ineq_ = warm->y_ineq.array().max(1e-8).matrix();
      if (warm->z_lower.size() == n_) z_lo_ = warm->z_lower.array().max(0.0).matrix();
      if (warm->z_upper.size() == n_) z_up_ = warm->z_upper.array().max(0.0).matrix();
    }
    for (int i : lo_idx_)
      if (z_lo_(i) <= 0.0) z_lo_(i) = std::min(1e4, std::max(1e-8, mu_ / (x_(i) - lo(i))));
    for (int i : up_idx_)
      if (z_up_(i) <= 0.0) z_up_(i) = std::min(1e4, std::max(1e-8, mu_ / (up(i) - x_(i))));
    for (int j = 0; j < m_ineq_; ++j)
      if (y_ineq_(j) <= 0.0) y_ineq_(j) = std::min(1e4, std::max(1e-8, mu_ / s_(j)));
  }

  void push_interior() {
    constexpr double k1 = 0.01, k2 = 0.01;
    for (int i = 0; i < n_; ++i) {
      if (is_fixed_[static_cast<size_t>(i)]) {
        x_(i) = lo(i);
        continue;
      }
      const bool hl = std::isfinite(lo(i)), hu = std::isfinite(up(i));
      if (hl && hu) {
        double pl = std::min(k1 * std::max(1.0, std::abs(lo(i))), k2 * (up(i) - lo(i)));
        double pu = std::min(k1 * std::max(1.0, std::abs(up(i))), k2 * (up(i) - lo(i)));
        x_(i) = std::min(std::max(x_(i), lo(i) + pl), up(i) - pu);
      } else if (hl) {
        x_(i) = std::max(x_(i), lo(i) + k1 * std::max(1.0, std::abs(lo(i))));
      } else if (hu) {
        x_(i) = std::min(x_(i), up(i) - k1 * std::max(1.0, std::abs(up(i))));
      }
    }
  }

  void evaluate() {
    f_ = p_.objective(x_);
    g_ = p_.gradient(x_);
    c_eq_.resize(m_eq_);
    if (m_eq_user_ > 0) c_eq_.head(m_eq_user_) = p_.eq_constraints(x_);
    for (size_t k = 0; k < fixed_.size(); ++k)
      c_eq_(m_eq_user_ + static_cast<int>(k)) = x_(fixed_[k]) - lo(fixed_[k]);

    std::vector<Eigen::Triplet<double>> trip;
    if (m_eq_user_ > 0) {
      SparseReal ju = p_.eq_jacobian(x_);
      for (int k = 0; k < ju.outerSize(); ++k)
        for (SparseReal::InnerIterator it(ju, k); it; ++it)
          trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
    for (size_t k = 0; k < fixed_.size(); ++k)
      trip.emplace_back(m_eq_user_ + static_cast<int>(k), fixed_[k], 1.0);
    j_eq_.resize(m_eq_, n_);
    j_eq_.setFromTriplets(trip.begin(), trip.end());

    if (m_ineq_ > 0) {
      c_ineq_ = p_.ineq_constraints(x_);
      j_ineq_ = p_.ineq_jacobian(x_);
    } else {
      c_ineq_.resize(0);
      j_ineq_.resize(0, n_);
    }
    c_all_.resize(m_eq_ + m_ineq_);
    c_all_ << c_eq_, (c_ineq_ + s_);
  }

  VectorXd stationarity_residual() const {
    VectorXd r = g_;
    if (m_eq_ > 0) r += j_eq_.transpose() * y_eq_;
    if (m_ineq_ > 0) r += j_ineq_.transpose() * y_ineq_;
    r -= z_lo_;
    r += z_up_;
    return r;
  }

  double kkt_error(double mu) const {
    const double s_max = 100.0;
    double mult_sum = y_eq_.lpNorm<1>() + y_ineq_.lpNorm<1>() + z_lo_.lpNorm<1>() + z_up_.lpNorm<1>();
    int mult_count = m_eq_ + m_ineq_ + static_cast<int>(lo_idx_.size() + up_idx_.size());
    double sd = std::max(s_max, mult_sum / std::max(1, mult_count)) / s_max;
    double z_sum = y_ineq_.lpNorm<1>() + z_lo_.lpNorm<1>() + z_up_.lpNorm<1>();
    int z_count = m_ineq_ + static_cast<int>(lo_idx_.size() + up_idx_.size());
    double sc = std::max(s_max, z_sum / std::max(1, z_count)) / s_max;

    double stat = stationarity_residual().lpNorm<Eigen::Infinity>() / sd;
    double feas = c_all_.size() > 0 ? c_all_.lpNorm<Eigen::Infinity>() : 0.0;
    double comp = 0.0;
    for (int i : lo_idx_) comp = std::max(comp, std::abs((x_(i) - lo(i)) * z_lo_(i) - mu));
    for (int i : up_idx_) comp = std::max(comp, std::abs((up(i) - x_(i)) * z_up_(i) - mu));
    for (int j = 0; j < m_ineq_; ++j) comp = std::max(comp, std::abs(s_(j) * y_ineq_(j) - mu));
    return std::max(stat, std::max(feas, comp / sc));
  }

  KktResiduals current_residuals() const {
    KktResiduals k;
    const double s_max = 100.0;
    double mult_sum = y_eq_.lpNorm<1>() + y_ineq_.lpNorm<1>() + z_lo_.lpNorm<1>() + z_up_.lpNorm<1>();
    int mult_count = m_eq_ + m_ineq_ + static_cast<int>(lo_idx_.size() + up_idx_.size());
    double sd = std::max(s_max, mult_sum / std::max(1, mult_count)) / s_max;
    k.stationarity = stationarity_residual().lpNorm<Eigen::Infinity>() / sd;
    k.feasibility = c_all_.size() > 0 ? c_all_.lpNorm<Eigen::Infinity>() : 0.0;
    double comp = 0.0;
    for (int i : lo_idx_) comp = std::max(comp, std::abs((x_(i) - lo(i)) * z_lo_(i)));
    for (int i : up_idx_) comp = std::max(comp, std::abs((up(i) - x_(i)) * z_up_(i)));
    for (int j = 0; j < m_ineq_; ++j) comp = std::max(comp, std::abs(s_(j) * y_ineq_(j)));
    double z_sum = y_ineq_.lpNorm<1>() + z_lo_.lpNorm<1>() + z_up_.lpNorm<1>();
    int z_count = m_ineq_ + static_cast<int>(lo_idx_.size() + up_idx_.size());
    double sc = std::max(s_max, z_sum / std::max(1, z_count)) / s_max;
    k.complementarity = comp / sc;
    return k;
  }

  SparseReal hessian() {
    if (p_.has_hessian()) {
      VectorXd y_user = y_eq_.head(m_eq_user_);
      return p_.lagrangian_hessian(x_, 1.0, y_user, y_ineq_);
    }
    return bfgs_.sparseView();
  }

  // Barrier merit function and its pieces.
  double barrier_objective(const VectorXd& x, const VectorXd& s, double f) const {
    double b = f;
    for (int i : lo_idx_) b -= mu_ * std::log(x(i) - lo(i));
    for (int i : up_idx_) b -= mu_ * std::log(up(i) - x(i));
    for (int j = 0; j < m_ineq_; ++j) b -= mu_ * std::log(s(j));
    return b;
  }

  double theta_of(const VectorXd& x, const VectorXd& s) const {
    double t = 0.0;
    if (m_eq_user_ > 0) t += p_.eq_constraints(x).lpNorm<1>();
    for (size_t k = 0; k < fixed_.size(); ++k) t += std::abs(x(fixed_[k]) - lo(fixed_[k]));
    if (m_ineq_ > 0) t += (p_.ineq_constraints(x) + s).lpNorm<1>();
    return t;
  }

  bool compute_and_take_step(NlpSolution& sol, int iter) {
    SparseReal w = hessian();

    double delta_w = 0.0, delta_c = 0.0;
    const double tau = std::max(0.99, 1.0 - mu_);

    VectorXd dx, dy_eq, dy_ineq, ds;
    double dphi = 0.0, quad = 0.0;

    for (int attempt = 0; attempt < 14; ++attempt) {
      if (attempt == 1) {
        delta_w = delta_w_last_ == 0.0 ? 1e-4 : std::max(1e-20, delta_w_last_ / 3.0);
        delta_c = 1e-8 * std::sqrt(std::sqrt(mu_));
      } else if (attempt > 1) {
        delta_w *= attempt == 2 && delta_w_last_ == 0.0 ? 100.0 : 8.0;
      }
      if (delta_w > 1e12) return false;

      if (!solve_kkt(w, delta_w, delta_c, dx, dy_eq, dy_ineq)) continue;

      // Recover eliminated blocks.
      ds.resize(m_ineq_);
      for (int j = 0; j < m_ineq_; ++j)
        ds(j) = mu_ / y_ineq_(j) - s_(j) - s_(j) / y_ineq_(j) * dy_ineq(j);

      // Merit slope; requires a descent direction, otherwise regularize more.
      VectorXd gphi_x = g_;
      for (int i : lo_idx_) gphi_x(i) -= mu_ / (x_(i) - lo(i));
      for (int i : up_idx_) gphi_x(i) += mu_ / (up(i) - x_(i));
      double slope = gphi_x.dot(dx);
      for (int j = 0; j < m_ineq_; ++j) slope -= mu_ / s_(j) * ds(j);

      quad = dx.dot(VectorXd(w * dx)) + delta_w * dx.squaredNorm();
      for (int i : lo_idx_) quad += z_lo_(i) / (x_(i) - lo(i)) * dx(i) * dx(i);
      for (int i : up_idx_) quad += z_up_(i) / (up(i) - x_(i)) * dx(i) * dx(i);
      for (int j = 0; j < m_ineq_; ++j) quad += y_ineq_(j) / s_(j) * ds(j) * ds(j);

      const double theta = c_all_.lpNorm<1>();
      if (theta > 1e-14) {
        double nu_req = (slope + 0.5 * std::max(0.0, quad)) / (0.5 * theta);
        if (nu_ < nu_req) nu_ = nu_req + 1.0;
      }
      dphi = slope - nu_ * theta;
      if (dphi >= 0.0) {
        // Not a descent direction. Near a barrier-subproblem optimum the
        // slope is zero to rounding; accept a plain non-increase there,
        // otherwise regularize harder.
        if (std::abs(dphi) <= 1e-9 * std::max(1.0, std::abs(f_)) && quad >= 0.0)
          dphi = 0.0;
        else
          continue;
      }

      // Fraction-to-the-boundary limits.
      double a_pri = 1.0;
      for (int i : lo_idx_)
        if (dx(i) < 0.0) a_pri = std::min(a_pri, -tau * (x_(i) - lo(i)) / dx(i));
      for (int i : up_idx_)
        if (dx(i) > 0.0) a_pri = std::min(a_pri, tau * (up(i) - x_(i)) / dx(i));
      for (int j = 0; j < m_ineq_; ++j)
        if (ds(j) < 0.0) a_pri = std::min(a_pri, -tau * s_(j) / ds(j));

      // Armijo backtracking on the merit function.
      const double phi0 = barrier_objective(x_, s_, f_) + nu_ * theta;
      double alpha = a_pri;
      bool accepted = false;
      for (int ls = 0; ls < 40 && alpha > 1e-13; ++ls, alpha *= 0.5) {
        VectorXd xt = x_ + alpha * dx;
        VectorXd st = s_ + alpha * ds;
        double ft = p_.objective(xt);
        if (!std::isfinite(ft)) continue;
        double phit = barrier_objective(xt, st, ft) + nu_ * theta_of(xt, st);
        if (std::isfinite(phit) && phit <= phi0 + 1e-4 * alpha * dphi) {
          accepted = true;
          take_step(sol, iter, alpha, tau, dx, ds, dy_eq, dy_ineq, phi0, phit, delta_w);
          break;
        }
      }
      if (accepted) {
        delta_w_last_ = delta_w;
        return true;
      }
      // Line search failed: escalate regularization and retry.
    }
    return false;
  }

  bool solve_kkt(const SparseReal& w, double delta_w, double delta_c, VectorXd& dx,
                 VectorXd& dy_eq, VectorXd& dy_ineq) {
    const int nk = n_ + m_eq_ + m_ineq_;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(w.nonZeros() + j_eq_.nonZeros() * 2 + j_ineq_.nonZeros() * 2 +
                                     nk));
    for (int k = 0; k < w.outerSize(); ++k)
      for (SparseReal::InnerIterator it(w, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < n_; ++i) {
      double d = delta_w;
      if (!is_fixed_[static_cast<size_t>(i)]) {
        if (std::isfinite(lo(i))) d += z_lo_(i) / (x_(i) - lo(i));
        if (std::isfinite(up(i))) d += z_up_(i) / (up(i) - x_(i));
      }
      if (d != 0.0) trip.emplace_back(i, i, d);
    }
    for (int k = 0; k < j_eq_.outerSize(); ++k)
      for (SparseReal::InnerIterator it(j_eq_, k); it; ++it) {
        trip.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        trip.emplace_back(static_cast<int>(it.col()), n_ + static_cast<int>(it.row()), it.value());
      }
    for (int i = 0; i < m_eq_; ++i) trip.emplace_back(n_ + i, n_ + i, -delta_c);
    for (int k = 0; k < j_ineq_.outerSize(); ++k)
      for (SparseReal::InnerIterator it(j_ineq_, k); it; ++it) {
        trip.emplace_back(n_ + m_eq_ + static_cast<int>(it.row()), static_cast<int>(it.col()),
                          it.value());
        trip.emplace_back(static_cast<int>(it.col()), n_ + m_eq_ + static_cast<int>(it.row()),
                          it.value());
      }
    for (int j = 0; j < m_ineq_; ++j)
      trip.emplace_back(n_ + m_eq_ + j, n_ + m_eq_ + j, -s_(j) / y_ineq_(j));

    SparseReal kkt(nk, nk);
    kkt.setFromTriplets(trip.begin(), trip.end());

    VectorXd rhs(nk);
    VectorXd rx = g_;
    if (m_eq_ > 0) rx += j_eq_.transpose() * y_eq_;
    if (m_ineq_ > 0) rx += j_ineq_.transpose() * y_ineq_;
    for (int i : lo_idx_) rx(i) -= mu_ / (x_(i) - lo(i));
    for (int i : up_idx_) rx(i) += mu_ / (up(i) - x_(i));
    rhs.head(n_) = -rx;
    rhs.segment(n_, m_eq_) = -c_eq_;
    for (int j = 0; j < m_ineq_; ++j) rhs(n_ + m_eq_ + j) = -c_ineq_(j) - mu_ / y_ineq_(j);

    VectorXd d;
    if (nk < opts_.dense_threshold) {
      Eigen::MatrixXd dense(kkt);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(dense);
      d = lu.solve(rhs);
    } else {
      Eigen::SparseLU<SparseReal> lu;
      lu.analyzePattern(kkt);
      lu.factorize(kkt);
      if (lu.info() != Eigen::Success) return false;
      d = lu.solve(rhs);
    }
    if (!d.allFinite()) return false;
    double resid = (kkt * d - rhs).lpNorm<Eigen::Infinity>();
    double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
    if (resid > 1e-6 * scale) return false;

    dx = d.head(n_);
    dy_eq = d.segment(n_, m_eq_);
    dy_ineq = d.tail(m_ineq_);
    return true;
  }

  void take_step(NlpSolution& sol, int iter, double alpha, double tau, const VectorXd& dx,
                 const VectorXd& ds, const VectorXd& dy_eq, const VectorXd& dy_ineq, double phi0,
                 double phit, double delta_w) {
    // Bound-dual steps, taken with their own fraction-to-the-boundary limit.
    VectorXd dz_lo = VectorXd::Zero(n_), dz_up = VectorXd::Zero(n_);
    for (int i : lo_idx_)
      dz_lo(i) = mu_ / (x_(i) - lo(i)) - z_lo_(i) - z_lo_(i) / (x_(i) - lo(i)) * dx(i);
    for (int i : up_idx_)
      dz_up(i) = mu_ / (up(i) - x_(i)) - z_up_(i) + z_up_(i) / (up(i) - x_(i)) * dx(i);

    double a_dual = 1.0;
    for (int i : lo_idx_)
      if (dz_lo(i) < 0.0) a_dual = std::min(a_dual, -tau * z_lo_(i) / dz_lo(i));
    for (int i : up_idx_)
      if (dz_up(i) < 0.0) a_dual = std::min(a_dual, -tau * z_up_(i) / dz_up(i));
    for (int j = 0; j < m_ineq_; ++j)
      if (dy_ineq(j) < 0.0) a_dual = std::min(a_dual, -tau * y_ineq_(j) / dy_ineq(j));

    VectorXd x_old = x_;
    VectorXd g_old = g_;
    SparseReal j_eq_old = j_eq_, j_ineq_old = j_ineq_;

    x_ += alpha * dx;
    if (m_ineq_ > 0) s_ += alpha * ds;
    y_eq_ += a_dual * dy_eq;
    if (m_ineq_ > 0) y_ineq_ += a_dual * dy_ineq;
    z_lo_ += a_dual * dz_lo;
    z_up_ += a_dual * dz_up;

    // kappa-sigma safeguard keeps the bound duals commensurate with mu.
    for (int i : lo_idx_) {
      double sl = x_(i) - lo(i);
      z_lo_(i) = std::min(std::max(z_lo_(i), mu_ / (kappa_sigma_ * sl)), kappa_sigma_ * mu_ / sl);
    }
    for (int i : up_idx_) {
      double sl = up(i) - x_(i);
      z_up_(i) = std::min(std::max(z_up_(i), mu_ / (kappa_sigma_ * sl)), kappa_sigma_ * mu_ / sl);
    }
    for (int j = 0; j < m_ineq_; ++j)
      y_ineq_(j) =
          std::min(std::max(y_ineq_(j), mu_ / (kappa_sigma_ * s_(j))), kappa_sigma_ * mu_ / s_(j));

    if (!p_.has_hessian()) update_bfgs(x_old, g_old, j_eq_old, j_ineq_old);

    if (opts_.collect_log) {
      IpmLogEntry e;
      e.iteration = iter;
      e.mu = mu_;
      e.merit_before = phi0;
      e.merit_after = phit;
      e.nu = nu_;
      e.alpha = alpha;
      e.delta_w = delta_w;
      e.kkt_error = kkt_error(0.0);
      sol.log.push_back(e);
    }
  }

  void update_bfgs(const VectorXd& x_old, const VectorXd& g_old, const SparseReal& j_eq_old,
                   const SparseReal& j_ineq_old) {
    VectorXd sk = x_ - x_old;
    if (sk.norm() < 1e-14) return;
    // Gradient of the Lagrangian at old and new points, same multipliers.
    VectorXd gl_old = g_old;
    if (m_eq_ > 0) gl_old += j_eq_old.transpose() * y_eq_;
    if (m_ineq_ > 0) gl_old += j_ineq_old.transpose() * y_ineq_;
    VectorXd g_new = p_.gradient(x_);
    VectorXd gl_new = g_new;
    if (m_eq_user_ > 0) gl_new += SparseReal(p_.eq_jacobian(x_)).transpose() * y_eq_.head(m_eq_user_);
    for (size_t k = 0; k < fixed_.size(); ++k) gl_new(fixed_[k]) += y_eq_(m_eq_user_ + static_cast<int>(k));
    if (m_ineq_ > 0) gl_new += SparseReal(p_.ineq_jacobian(x_)).transpose() * y_ineq_;
    VectorXd yk = gl_new - gl_old;

    VectorXd bs = bfgs_ * sk;
    double sbs = sk.dot(bs);
    double sy = sk.dot(yk);
    // Powell damping keeps the approximation positive definite.
    if (sy < 0.2 * sbs) {
      double t = 0.8 * sbs / (sbs - sy);
      yk = t * yk + (1.0 - t) * bs;
      sy = sk.dot(yk);
    }
    if (sy <= 1e-12 * sk.norm() * yk.norm() || sbs <= 0.0) return;
    bfgs_ += yk * yk.transpose() / sy - bs * bs.transpose() / sbs;
  }

  NlpSolution finish(NlpSolution& sol, NlpStatus status, int iters) {
    evaluate();
    sol.x = x_;
    sol.y_eq = y_eq_.head(m_eq_user_);
    sol.y_ineq = y_ineq_;
    sol.z_lower = z_lo_;
    sol.z_upper = z_up_;
    sol.status = status;
    sol.kkt = current_residuals();
    sol.iterations = iters;
    sol.objective = f_;
    if (status == NlpStatus::NumericalFailure)
      sol.message = "linear system remained singular or non-descent after regularization";
    else if (status == NlpStatus::Infeasible)
      sol.message = "primal infeasibility stagnated";
    return sol;
  }
};

inline NlpSolution solve_nlp(const NlpProblem& p, const IpmOptions& opts = {},
                             const NlpSolution* warm = nullptr) {
  InteriorPointSolver solver(p, opts);
  return solver.solve(warm);
}

}  // namespace acdcopf
