#include <catch2/catch_amalgamated.hpp>

#include "acdcopf/ipm.hpp"
#include "support/oracles.hpp"

using namespace acdcopf;
using Catch::Approx;

namespace {

SparseReal sparse_from(std::initializer_list<std::initializer_list<double>> rows) {
  int r = static_cast<int>(rows.size());
  int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  Eigen::MatrixXd m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m.sparseView();
}

}  // namespace

TEST_CASE("bound-constrained quadratic: min x^2 s.t. x >= 1") {
  NlpProblem p;
  p.num_vars = 1;
  p.objective = [](const VectorXd& x) { return x(0) * x(0); };
  p.gradient = [](const VectorXd& x) { return VectorXd::Constant(1, 2.0 * x(0)); };
  p.lagrangian_hessian = [](const VectorXd&, double sf, const VectorXd&, const VectorXd&) {
    return sparse_from({{2.0 * sf}});
  };
  p.lower = VectorXd::Constant(1, 1.0);
  p.upper = VectorXd::Constant(1, kInf);
  p.x0 = VectorXd::Constant(1, 3.0);

  NlpSolution s = solve_nlp(p);
  REQUIRE(s.status == NlpStatus::Converged);
  CHECK(s.x(0) == Approx(1.0).margin(1e-7));
  CHECK(s.z_lower(0) == Approx(2.0).margin(1e-6));
  CHECK(s.kkt.max() <= 1e-8);
}

TEST_CASE("inequality: min -x-y s.t. x^2+y^2 <= 1") {
  NlpProblem p;
  p.num_vars = 2;
  p.num_ineq = 1;
  p.objective = [](const VectorXd& x) { return -x(0) - x(1); };
  p.gradient = [](const VectorXd&) { return VectorXd::Constant(2, -1.0); };
  p.ineq_constraints = [](const VectorXd& x) {
    return VectorXd::Constant(1, x.squaredNorm() - 1.0);
  };
  p.ineq_jacobian = [](const VectorXd& x) {
    return sparse_from({{2.0 * x(0), 2.0 * x(1)}});
  };
  p.lagrangian_hessian = [](const VectorXd&, double, const VectorXd&, const VectorXd& yi) {
    return sparse_from({{2.0 * yi(0), 0.0}, {0.0, 2.0 * yi(0)}});
  };
  p.lower = VectorXd::Constant(2, -kInf);
  p.upper = VectorXd::Constant(2, kInf);
  p.x0 = VectorXd::Zero(2);

  NlpSolution s = solve_nlp(p);
  REQUIRE(s.status == NlpStatus::Converged);
  const double root_half = 1.0 / std::sqrt(2.0);
  CHECK(s.x(0) == Approx(root_half).margin(1e-7));
  CHECK(s.x(1) == Approx(root_half).margin(1e-7));
  CHECK(s.y_ineq(0) == Approx(root_half).margin(1e-6));
}

TEST_CASE("equality block: min x^2+y^2 s.t. x+y = 2") {
  NlpProblem p;
  p.num_vars = 2;
  p.num_eq = 1;
  p.objective = [](const VectorXd& x) { return x.squaredNorm(); };
  p.gradient = [](const VectorXd& x) { return VectorXd(2.0 * x); };
  p.eq_constraints = [](const VectorXd& x) { return VectorXd::Constant(1, x(0) + x(1) - 2.0); };
  p.eq_jacobian = [](const VectorXd&) { return sparse_from({{1.0, 1.0}}); };
  p.lagrangian_hessian = [](const VectorXd&, double sf, const VectorXd&, const VectorXd&) {
    return sparse_from({{2.0 * sf, 0.0}, {0.0, 2.0 * sf}});
  };
  p.lower = VectorXd::Constant(2, -kInf);
  p.upper = VectorXd::Constant(2, kInf);
  p.x0 = VectorXd::Zero(2);

  NlpSolution s = solve_nlp(p);
  REQUIRE(s.status == NlpStatus::Converged);
  CHECK(s.x(0) == Approx(1.0).margin(1e-7));
  CHECK(s.x(1) == Approx(1.0).margin(1e-7));
  CHECK(s.y_eq(0) == Approx(-2.0).margin(1e-6));
}

TEST_CASE("nonconvex objective needs regularization: min -||x||^2 in a box") {
  NlpProblem p;
  p.num_vars = 2;
  p.objective = [](const VectorXd& x) { return -x.squaredNorm(); };
  p.gradient = [](const VectorXd& x) { return VectorXd(-2.0 * x); };
  p.lagrangian_hessian = [](const VectorXd&, double sf, const VectorXd&, const VectorXd&) {
    return sparse_from({{-2.0 * sf, 0.0}, {0.0, -2.0 * sf}});
  };
  p.lower = VectorXd::Constant(2, -1.0);
  p.upper = VectorXd::Constant(2, 2.0);
  p.x0 = VectorXd::Constant(2, 0.5);

  NlpSolution s = solve_nlp(p);
  REQUIRE(s.status == NlpStatus::Converged);
  // Maximizer of the norm within the box.
  CHECK(s.x(0) == Approx(2.0).margin(1e-6));
  CHECK(s.x(1) == Approx(2.0).margin(1e-6));
}

TEST_CASE("convex box QP matches the projected-gradient oracle") {
  // min 0.5 x'Qx - b'x over [0, 2]^3 with PD Q.
  Eigen::MatrixXd q(3, 3);
  q << 4, 1, 0, 1, 3, 1, 0, 1, 5;
  VectorXd b(3);
  b << 1.0, -8.0, 3.0;

  auto f = [&](const VectorXd& x) { return 0.5 * x.dot(q * x) - b.dot(x); };
  auto g = [&](const VectorXd& x) { return VectorXd(q * x - b); };

  NlpProblem p;
  p.num_vars = 3;
  p.objective = f;
  p.gradient = g;
  p.lagrangian_hessian = [&](const VectorXd&, double sf, const VectorXd&, const VectorXd&) {
    return SparseReal((sf * q).sparseView());
  };
  p.lower = VectorXd::Zero(3);
  p.upper = VectorXd::Constant(3, 2.0);
  p.x0 = VectorXd::Constant(3, 1.0);

  NlpSolution s = solve_nlp(p);
  REQUIRE(s.status == NlpStatus::Converged);

  VectorXd xo = oracle::projected_gradient(f, g, p.lower, p.upper, p.x0);
  CHECK(s.objective == Approx(f(xo)).margin(1e-6));
}

TEST_CASE("BFGS fallback solves a smooth problem without a Hessian callback") {
  // Rosenbrock-like convexified bowl.
  NlpProblem p;
  p.num_vars = 2;
  p.objective = [](const VectorXd& x) {
    return std::pow(x(0) - 1.0, 4) + x(1) * x(1) + 0.5 * x(0) * x(0);
  };
  p.gradient = [](const VectorXd& x) {
    VectorXd g(2);
    g(0) = 4.0 * std::pow(x(0) - 1.0, 3) + x(0);
    g(1) = 2.0 * x(1);
    return g;
  };
  p.lower = VectorXd::Constant(2, -kInf);
  p.upper = VectorXd::Constant(2, kInf);
  p.x0 = VectorXd::Constant(2, 2.0);

  NlpSolution s = solve_nlp(p);
  REQUIRE(s.status == NlpStatus::Converged);
  CHECK(std::abs(s.x(1)) < 1e-6);
  // Stationarity: 4(x-1)^3 + x = 0.
  double x = s.x(0);
  CHECK(std::abs(4.0 * std::pow(x - 1.0, 3) + x) < 1e-6);
}

TEST_CASE("fixed variables are honored exactly") {
  NlpProblem p;
  p.num_vars = 2;
  p.objective = [](const VectorXd& x) { return x.squaredNorm(); };
  p.gradient = [](const VectorXd& x) { return VectorXd(2.0 * x); };
  p.lagrangian_hessian = [](const VectorXd&, double sf, const VectorXd&, const VectorXd&) {
    return sparse_from({{2.0 * sf, 0.0}, {0.0, 2.0 * sf}});
  };
  p.lower = VectorXd(2);
  p.upper = VectorXd(2);
  p.lower << 1.5, -5.0;
  p.upper << 1.5, 5.0;
  p.x0 = VectorXd::Zero(2);

  NlpSolution s = solve_nlp(p);
  REQUIRE(s.status == NlpStatus::Converged);
  CHECK(s.x(0) == Approx(1.5).margin(1e-9));
  CHECK(std::abs(s.x(1)) < 1e-7);
}

TEST_CASE("contradictory constraints trigger the infeasibility heuristic") {
  NlpProblem p;
  p.num_vars = 1;
  p.num_ineq = 1;
  p.objective = [](const VectorXd& x) { return x(0); };
  p.gradient = [](const VectorXd&) { return VectorXd::Constant(1, 1.0); };
  p.ineq_constraints = [](const VectorXd& x) { return VectorXd::Constant(1, x(0) - 1.0); };
  p.ineq_jacobian = [](const VectorXd&) { return sparse_from({{1.0}}); };
  p.lagrangian_hessian = [](const VectorXd&, double, const VectorXd&, const VectorXd&) {
    return sparse_from({{0.0}});
  };
  p.lower = VectorXd::Constant(1, 2.0);  // x >= 2 contradicts x <= 1
  p.upper = VectorXd::Constant(1, kInf);
  p.x0 = VectorXd::Constant(1, 3.0);

  NlpSolution s = solve_nlp(p);
  CHECK((s.status == NlpStatus::Infeasible || s.status == NlpStatus::MaxIterations));
  CHECK(s.status == NlpStatus::Infeasible);
}

TEST_CASE("iteration cap reports max_iterations") {
  NlpProblem p;
  p.num_vars = 2;
  p.num_ineq = 1;
  p.objective = [](const VectorXd& x) { return -x(0) - x(1); };
  p.gradient = [](const VectorXd&) { return VectorXd::Constant(2, -1.0); };
  p.ineq_constraints = [](const VectorXd& x) {
    return VectorXd::Constant(1, x.squaredNorm() - 1.0);
  };
  p.ineq_jacobian = [](const VectorXd& x) {
    return sparse_from({{2.0 * x(0), 2.0 * x(1)}});
  };
  p.lagrangian_hessian = [](const VectorXd&, double, const VectorXd&, const VectorXd& yi) {
    return sparse_from({{2.0 * yi(0), 0.0}, {0.0, 2.0 * yi(0)}});
  };
  p.lower = VectorXd::Constant(2, -kInf);
  p.upper = VectorXd::Constant(2, kInf);
  p.x0 = VectorXd::Zero(2);

  IpmOptions opts;
  opts.max_iterations = 2;
  NlpSolution s = solve_nlp(p, opts);
  CHECK(s.status == NlpStatus::MaxIterations);
}

TEST_CASE("accepted steps decrease the barrier merit function") {
  NlpProblem p;
  p.num_vars = 2;
  p.num_eq = 1;
  p.num_ineq = 1;
  p.objective = [](const VectorXd& x) { return std::pow(x(0), 2) + 2.0 * std::pow(x(1), 2); };
  p.gradient = [](const VectorXd& x) {
    VectorXd g(2);
    g(0) = 2.0 * x(0);
    g(1) = 4.0 * x(1);
    return g;
  };
  p.eq_constraints = [](const VectorXd& x) { return VectorXd::Constant(1, x(0) + x(1) - 1.0); };
  p.eq_jacobian = [](const VectorXd&) { return sparse_from({{1.0, 1.0}}); };
  p.ineq_constraints = [](const VectorXd& x) { return VectorXd::Constant(1, 0.2 - x(0)); };
  p.ineq_jacobian = [](const VectorXd&) { return sparse_from({{-1.0, 0.0}}); };
  p.lagrangian_hessian = [](const VectorXd&, double sf, const VectorXd&, const VectorXd&) {
    return sparse_from({{2.0 * sf, 0.0}, {0.0, 4.0 * sf}});
  };
  p.lower = VectorXd::Constant(2, -2.0);
  p.upper = VectorXd::Constant(2, 2.0);
  p.x0 = VectorXd::Constant(2, 0.3);

  IpmOptions opts;
  opts.collect_log = true;
  NlpSolution s = solve_nlp(p, opts);
  REQUIRE(s.status == NlpStatus::Converged);
  REQUIRE(!s.log.empty());
  for (const IpmLogEntry& e : s.log)
    CHECK(e.merit_after <= e.merit_before + 1e-12 * std::max(1.0, std::abs(e.merit_before)));
}

TEST_CASE("warm starts reuse a previous solution") {
  NlpProblem p;
  p.num_vars = 2;
  p.num_ineq = 1;
  p.objective = [](const VectorXd& x) { return -x(0) - x(1); };
  p.gradient = [](const VectorXd&) { return VectorXd::Constant(2, -1.0); };
  p.ineq_constraints = [](const VectorXd& x) {
    return VectorXd::Constant(1, x.squaredNorm() - 1.0);
  };
  p.ineq_jacobian = [](const VectorXd& x) {
    return sparse_from({{2.0 * x(0), 2.0 * x(1)}});
  };
  p.lagrangian_hessian = [](const VectorXd&, double, const VectorXd&, const VectorXd& yi) {
    return sparse_from({{2.0 * yi(0), 0.0}, {0.0, 2.0 * yi(0)}});
  };
  p.lower = VectorXd::Constant(2, -kInf);
  p.upper = VectorXd::Constant(2, kInf);
  p.x0 = VectorXd::Zero(2);

  NlpSolution cold = solve_nlp(p);
  REQUIRE(cold.status == NlpStatus::Converged);

  IpmOptions warm_opts;
  warm_opts.mu_init = 1e-6;
  NlpSolution warm = solve_nlp(p, warm_opts, &cold);
  REQUIRE(warm.status == NlpStatus::Converged);
  CHECK(warm.iterations <= cold.iterations);
  CHECK(warm.objective == Approx(cold.objective).margin(1e-8));
}
