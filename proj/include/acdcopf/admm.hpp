#pragma once

// Consensus iteration building blocks: weighted-penalty configuration,
// per-region dual state, the z / dual / penalty update rules, and the
// augmentation that turns a regional OPF into the penalized subproblem
//
//   min f_k(x) + lambda' A_k x + (rho_k/2) ||A_k x - z_k||_W^2
//
// z_k and lambda_k live in coupling-row space; every coupling row has a
// single +-1 coefficient on one regional variable, so the penalty is a
// diagonal quadratic over the boundary variables.

#include <cmath>
#include <string>
#include <vector>

#include "acdcopf/nlp.hpp"
#include "acdcopf/opf.hpp"
#include "acdcopf/partition.hpp"

namespace acdcopf {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct AdmmConfig {
  double rho0 = 100.0;       // initial penalty
  double tau = 1.1;          // penalty ramp factor
  double theta = 0.99;       // residual-decrease indicator
  double eps = 1e-3;         // convergence tolerance on the consensus residual
  double w_voltage = 100.0;  // weight of voltage-class rows
  double w_power_ac = 1.0;   // weight of AC power rows
  double w_power_dc = 10.0;  // weight of DC power rows
  int max_iterations = 500;

  // Subproblem solver knobs.
  double nlp_tol = 1e-8;
  int nlp_max_iterations = 300;
  double warm_mu = 1e-5;

  void validate() const {
    if (!(rho0 > 0.0)) throw ConfigError("rho0 must be positive");
    if (!(tau > 1.0)) throw ConfigError("tau must exceed 1");
    if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("theta must lie in (0,1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (!(w_voltage > 0.0 && w_power_ac > 0.0 && w_power_dc > 0.0))
      throw ConfigError("all W entries must be positive");
    if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  }

  double weight(RowKind k) const {
    if (is_voltage_row(k)) return w_voltage;
    return is_dc_row(k) ? w_power_dc : w_power_ac;
  }
};

struct RegionState {
  VectorXd z;       // per local coupling row, global sign convention
  VectorXd lambda;  // per local coupling row
  double rho = 0.0;
  double gamma = kInf;  // previous local residual
};

// --- update rules -----------------------------------------------------------

// Auxiliary target from the two boundary values of one row: voltage rows
// average, power rows take the half-difference (anti-symmetry).
inline double update_z_value(double m_own, double m_neighbor, bool voltage_class) {
  return voltage_class ? 0.5 * (m_own + m_neighbor) : 0.5 * (m_own - m_neighbor);
}

inline double update_dual_value(double lambda, double rho, double weight, double residual) {
  return lambda + rho * weight * residual;
}

// Penalty keeps its value when the local residual shrank by at least the
// indicator factor, otherwise ramps by tau. gamma_prev = +inf (first
// iteration) keeps rho for any finite residual; 0 <= theta*0 keeps it at
// an exact consensus point.
inline double update_penalty_value(double gamma_prev, double gamma_plus, double theta, double tau,
                                   double rho) {
  return gamma_plus <= theta * gamma_prev ? rho : tau * rho;
}

// --- messages ---------------------------------------------------------------

enum class MessageClass : char { Voltage = 'V', Power = 'S' };

struct TieMessage {
  int tie = -1;
  MessageClass cls = MessageClass::Voltage;
  std::vector<double> values;  // boundary values in local row order
};

// Boundary rows of the given class, per tie, evaluated at x. The payload
// carries the region's own boundary values (|V|, angle / P, Q for AC
// cuts; V / P for DC cuts) and nothing else.
inline std::vector<TieMessage> compute_messages(const RegionalProblem& rp, const VectorXd& x) {
  std::vector<TieMessage> out;
  int current_tie = -1;
  for (const LocalRow& row : rp.rows) {
    bool voltage = is_voltage_row(row.kind);
    if (row.tie != current_tie) {
      current_tie = row.tie;
      out.push_back({row.tie, MessageClass::Voltage, {}});
      out.push_back({row.tie, MessageClass::Power, {}});
    }
    TieMessage& msg = voltage ? out[out.size() - 2] : out.back();
    msg.values.push_back(x(row.var));
  }
  return out;
}

inline RegionState initial_region_state(const RegionalProblem& rp, const AdmmConfig& cfg) {
  RegionState st;
  st.z.resize(static_cast<int>(rp.rows.size()));
  st.lambda = VectorXd::Zero(static_cast<int>(rp.rows.size()));
  st.rho = cfg.rho0;
  st.gamma = kInf;
  for (size_t i = 0; i < rp.rows.size(); ++i) {
    const LocalRow& row = rp.rows[i];
    double flat = row.kind == RowKind::AcVmag || row.kind == RowKind::DcV ? 1.0 : 0.0;
    st.z(static_cast<int>(i)) = row.coeff * flat;
  }
  return st;
}

// One region's post-exchange update: refreshes z from the neighbor
// values, then the duals, then the penalty. Returns the new local
// residual Gamma^+ = ||A_k x - z_k||_inf.
inline double apply_exchange(const RegionalProblem& rp, const AdmmConfig& cfg, const VectorXd& x,
                             const std::vector<TieMessage>& neighbor, RegionState& st) {
  if (st.z.size() != static_cast<int>(rp.rows.size()) ||
      st.lambda.size() != static_cast<int>(rp.rows.size()))
    throw std::invalid_argument("region state does not match the coupling rows");

  // Index neighbor payloads by (tie, class).
  auto find_msg = [&](int tie, MessageClass cls) -> const TieMessage& {
    for (const TieMessage& m : neighbor)
      if (m.tie == tie && m.cls == cls) return m;
    throw std::invalid_argument("missing neighbor message for tie " + std::to_string(tie));
  };

  double gamma_plus = 0.0;
  int cursor_tie = -1;
  int v_idx = 0, s_idx = 0;
  for (size_t i = 0; i < rp.rows.size(); ++i) {
    const LocalRow& row = rp.rows[i];
    if (row.tie != cursor_tie) {
      cursor_tie = row.tie;
      v_idx = 0;
      s_idx = 0;
    }
    const bool voltage = is_voltage_row(row.kind);
    const TieMessage& msg =
        find_msg(row.tie, voltage ? MessageClass::Voltage : MessageClass::Power);
    const double m_own = x(row.var);
    const double m_nbr = msg.values.at(static_cast<size_t>(voltage ? v_idx++ : s_idx++));
    const double z_own = update_z_value(m_own, m_nbr, voltage);
    st.z(static_cast<int>(i)) = row.coeff * z_own;

    const double residual = row.coeff * m_own - st.z(static_cast<int>(i));
    st.lambda(static_cast<int>(i)) =
        update_dual_value(st.lambda(static_cast<int>(i)), st.rho, cfg.weight(row.kind), residual);
    gamma_plus = std::max(gamma_plus, std::abs(residual));
  }
  st.rho = update_penalty_value(st.gamma, gamma_plus, cfg.theta, cfg.tau, st.rho);
  st.gamma = gamma_plus;
  return gamma_plus;
}

// --- subproblem augmentation ------------------------------------------------

// Wraps the regional OPF with the dual linear term and the W-weighted
// quadratic penalty; constraints are untouched.
inline NlpProblem augment_subproblem(const RegionalProblem& rp, const OpfAssembly& assembly,
                                     const RegionState& st, const AdmmConfig& cfg) {
  if (st.z.size() != static_cast<int>(rp.rows.size()) ||
      st.lambda.size() != static_cast<int>(rp.rows.size()))
    throw std::invalid_argument("region state does not match the coupling rows");

  struct Term {
    int var;
    double coeff;
    double weight;
  };
  auto terms = std::make_shared<std::vector<Term>>();
  for (const LocalRow& row : rp.rows)
    terms->push_back({row.var, row.coeff, cfg.weight(row.kind)});
  auto z = std::make_shared<VectorXd>(st.z);
  auto lambda = std::make_shared<VectorXd>(st.lambda);
  const double rho = st.rho;

  NlpProblem p = assembly.problem;
  auto base_obj = assembly.problem.objective;
  auto base_grad = assembly.problem.gradient;
  auto base_hess = assembly.problem.lagrangian_hessian;

  p.objective = [base_obj, terms, z, lambda, rho](const VectorXd& x) {
    double f = base_obj(x);
    for (size_t i = 0; i < terms->size(); ++i) {
      const Term& t = (*terms)[i];
      const double ax = t.coeff * x(t.var);
      const double r = ax - (*z)(static_cast<int>(i));
      f += (*lambda)(static_cast<int>(i)) * ax + 0.5 * rho * t.weight * r * r;
    }
    return f;
  };
  p.gradient = [base_grad, terms, z, lambda, rho](const VectorXd& x) {
    VectorXd g = base_grad(x);
    for (size_t i = 0; i < terms->size(); ++i) {
      const Term& t = (*terms)[i];
      const double r = t.coeff * x(t.var) - (*z)(static_cast<int>(i));
      g(t.var) += t.coeff * ((*lambda)(static_cast<int>(i)) + rho * t.weight * r);
    }
    return g;
  };
  p.lagrangian_hessian = [base_hess, terms, rho](const VectorXd& x, double sf, const VectorXd& ye,
                                                 const VectorXd& yi) {
    SparseReal h = base_hess(x, sf, ye, yi);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(terms->size());
    for (const Term& t : *terms) trip.emplace_back(t.var, t.var, sf * rho * t.weight);
    SparseReal add(h.rows(), h.cols());
    add.setFromTriplets(trip.begin(), trip.end());
    return SparseReal(h + add);
  };
  return p;
}

// --- iteration trace ---------------------------------------------------------

struct IterationRecord {
  int iteration = 0;
  double residual = 0.0;   // global consensus residual, infinity norm
  double objective = 0.0;  // sum of regional objectives, original equipment only
  std::vector<double> rho;
  std::vector<double> gamma;
  double solve_seconds = 0.0;
  double exchange_seconds = 0.0;
};

struct IterationTrace {
  std::vector<std::string> regions;
  std::vector<IterationRecord> rows;

  std::string to_csv() const {
    auto fmt = [](double v) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      return std::string(buf);
    };
    std::string out = "iteration,residual,objective";
    for (const auto& r : regions) out += ",rho_" + r;
    for (const auto& r : regions) out += ",gamma_" + r;
    out += "\n";
    for (const IterationRecord& row : rows) {
      out += std::to_string(row.iteration) + "," + fmt(row.residual) + "," + fmt(row.objective);
      for (double v : row.rho) out += "," + fmt(v);
      for (double v : row.gamma) out += "," + fmt(v);
      out += "\n";
    }
    return out;
  }
};

}  // namespace acdcopf
