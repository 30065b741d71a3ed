#pragma once

// Generic smooth constrained minimization instance,
//
//   min f(x)  s.t.  c_eq(x) = 0,  c_ineq(x) <= 0,  lower <= x <= upper,
//
// with callback-provided derivatives. Equalities are a first-class block;
// the Lagrangian Hessian callback is optional (a damped BFGS approximation
// is used when absent).

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace acdcopf {

using Eigen::VectorXd;
using SparseReal = Eigen::SparseMatrix<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct NlpProblem {
  int num_vars = 0;
  int num_eq = 0;
  int num_ineq = 0;

  std::function<double(const VectorXd&)> objective;
  std::function<VectorXd(const VectorXd&)> gradient;
  std::function<VectorXd(const VectorXd&)> eq_constraints;
  std::function<SparseReal(const VectorXd&)> eq_jacobian;
  std::function<VectorXd(const VectorXd&)> ineq_constraints;
  std::function<SparseReal(const VectorXd&)> ineq_jacobian;
  // sigma_f * grad^2 f + sum_i y_eq_i grad^2 c_eq_i + sum_j y_ineq_j grad^2 c_ineq_j,
  // returned as a full symmetric sparse matrix. Optional.
  std::function<SparseReal(const VectorXd&, double, const VectorXd&, const VectorXd&)>
      lagrangian_hessian;

  VectorXd lower;  // -inf where unbounded
  VectorXd upper;  // +inf where unbounded
  VectorXd x0;

  bool has_hessian() const { return static_cast<bool>(lagrangian_hessian); }
};

enum class NlpStatus { Converged, MaxIterations, Infeasible, NumericalFailure };

inline const char* to_string(NlpStatus s) {
  switch (s) {
    case NlpStatus::Converged: return "converged";
    case NlpStatus::MaxIterations: return "max_iterations";
    case NlpStatus::Infeasible: return "infeasible";
    case NlpStatus::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

struct KktResiduals {
  double stationarity = kInf;
  double feasibility = kInf;
  double complementarity = kInf;
  double max() const { return std::max(stationarity, std::max(feasibility, complementarity)); }
};

// One line-search record per accepted step; used by diagnostics and the
// merit-monotonicity tests.
struct IpmLogEntry {
  int iteration = 0;
  double mu = 0.0;
  double merit_before = 0.0;
  double merit_after = 0.0;
  double nu = 0.0;
  double alpha = 0.0;
  double delta_w = 0.0;
  double kkt_error = 0.0;
};

struct NlpSolution {
  VectorXd x;
  VectorXd y_eq;     // equality multipliers
  VectorXd y_ineq;   // inequality multipliers (>= 0)
  VectorXd z_lower;  // bound multipliers (>= 0)
  VectorXd z_upper;
  NlpStatus status = NlpStatus::NumericalFailure;
  KktResiduals kkt;
  int iterations = 0;
  double objective = kInf;
  std::vector<IpmLogEntry> log;
  std::string message;

  bool ok() const { return status == NlpStatus::Converged; }
};

struct IpmOptions {
  double tol = 1e-8;
  int max_iterations = 300;
  double mu_init = 0.1;
  bool collect_log = false;
  // Problems whose KKT system is smaller than this are solved densely.
  int dense_threshold = 200;
};

}  // namespace acdcopf
