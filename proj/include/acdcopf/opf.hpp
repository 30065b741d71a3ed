#pragma once

// Assembles the hybrid AC-DC optimal power flow as an NlpProblem.
//
// Variables (per scope): |V| and angle per AC bus, V per DC bus, (P,Q)
// per generator, (P,Q) per converter. Objective: sum b_G*P_G +
// a_Q*(Q_G^2 + Q_C^2) in currency/h, auxiliary interchange generators
// excluded. Equalities: AC active/reactive balance, DC balance with the
// converter loss polynomial inserted, reference-bus fixings. Inequality
// per converter: P_C^2 + Q_C^2 <= S_rated^2 (apparent-power capability).
// Converter sign convention: positive P_C injects into the AC bus.

#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "acdcopf/network.hpp"
#include "acdcopf/nlp.hpp"

namespace acdcopf {

struct OpfVariableMap {
  int n_ac = 0, n_dc = 0, n_gen = 0, n_conv = 0;
  int num_vars = 0;

  int vm(int ac_pos) const { return ac_pos; }
  int va(int ac_pos) const { return n_ac + ac_pos; }
  int vdc(int dc_pos) const { return 2 * n_ac + dc_pos; }
  int pg(int gen) const { return 2 * n_ac + n_dc + gen; }
  int qg(int gen) const { return 2 * n_ac + n_dc + n_gen + gen; }
  int pc(int conv) const { return 2 * n_ac + n_dc + 2 * n_gen + conv; }
  int qc(int conv) const { return 2 * n_ac + n_dc + 2 * n_gen + n_conv + conv; }
};

inline OpfVariableMap build_variable_map(const Network& net) {
  OpfVariableMap m;
  m.n_ac = net.num_ac();
  m.n_dc = net.num_dc();
  m.n_gen = static_cast<int>(net.generators.size());
  m.n_conv = static_cast<int>(net.converters.size());
  m.num_vars = 2 * m.n_ac + m.n_dc + 2 * m.n_gen + 2 * m.n_conv;
  return m;
}

namespace detail {

using RowMajorComplex = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
using RowMajorReal = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct OpfContext {
  Network net;
  OpfVariableMap map;
  RowMajorComplex y_ac;
  RowMajorReal y_dc;
  std::vector<std::vector<int>> gens_at_bus;   // bus index -> generator list
  std::vector<std::vector<int>> convs_at_bus;  // bus index -> converter list (either side)
  std::vector<int> ac_refs, dc_refs;           // ac/dc positions of reference buses
  int num_eq = 0;

  int p_row(int ac_pos) const { return ac_pos; }
  int q_row(int ac_pos) const { return map.n_ac + ac_pos; }
  int dc_row(int dc_pos) const { return 2 * map.n_ac + dc_pos; }
  int slack_rows_start() const { return 2 * map.n_ac + map.n_dc; }
};

}  // namespace detail

struct OpfAssembly {
  std::shared_ptr<const detail::OpfContext> ctx;
  NlpProblem problem;

  const Network& net() const { return ctx->net; }
  const OpfVariableMap& map() const { return ctx->map; }
  int p_row(int ac_pos) const { return ctx->p_row(ac_pos); }
  int q_row(int ac_pos) const { return ctx->q_row(ac_pos); }
  int dc_row(int dc_pos) const { return ctx->dc_row(dc_pos); }
};

namespace detail {

// Restricts a network to the given bus-id scope. Branches and converters
// must lie fully inside or fully outside the scope.
inline Network restrict_to_scope(const Network& net, const std::set<int>& scope) {
  Network out;
  out.base_mva = net.base_mva;
  out.a_q = net.a_q;
  out.role = NetworkRole::Regional;
  for (const Bus& b : net.buses)
    if (scope.count(b.id)) out.buses.push_back(b);
  for (const Branch& br : net.branches) {
    bool f = scope.count(br.from) != 0, t = scope.count(br.to) != 0;
    if (f != t)
      throw ValidationError("scope cuts branch " + std::to_string(br.from) + "-" +
                            std::to_string(br.to) +
                            "; partition tie handling must run first");
    if (f) out.branches.push_back(br);
  }
  for (const Generator& g : net.generators)
    if (scope.count(g.bus)) out.generators.push_back(g);
  for (const Converter& c : net.converters) {
    bool a = scope.count(c.ac_bus) != 0, d = scope.count(c.dc_bus) != 0;
    if (a != d)
      throw ValidationError("scope cuts converter " + std::to_string(c.ac_bus) + "-" +
                            std::to_string(c.dc_bus));
    if (a) out.converters.push_back(c);
  }
  out.validate();
  return out;
}

inline VectorXd flat_start(const OpfContext& c) {
  const OpfVariableMap& m = c.map;
  VectorXd x = VectorXd::Zero(m.num_vars);
  for (int i = 0; i < m.n_ac; ++i) {
    const Bus& b = c.net.buses[static_cast<size_t>(c.net.ac_order()[static_cast<size_t>(i)])];
    x(m.vm(i)) = std::clamp(1.0, b.v_min, b.v_max);
  }
  for (int j = 0; j < m.n_dc; ++j) {
    const Bus& b = c.net.buses[static_cast<size_t>(c.net.dc_order()[static_cast<size_t>(j)])];
    x(m.vdc(j)) = std::clamp(1.0, b.v_min, b.v_max);
  }
  for (int g = 0; g < m.n_gen; ++g) {
    const Generator& gen = c.net.generators[static_cast<size_t>(g)];
    x(m.pg(g)) = 0.5 * (gen.p_min + gen.p_max);
    x(m.qg(g)) = 0.5 * (gen.q_min + gen.q_max);
  }
  return x;
}

// AC bus injections S_i = V_i * conj((Y V)_i), complex path; used by the
// constraint callbacks.
inline void ac_injections(const OpfContext& c, const VectorXd& x, VectorXd& p, VectorXd& q) {
  const int n = c.map.n_ac;
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v(i) = std::polar(x(c.map.vm(i)), x(c.map.va(i)));
  Eigen::VectorXcd iv = c.y_ac * v;
  p.resize(n);
  q.resize(n);
  for (int i = 0; i < n; ++i) {
    Complex s = v(i) * std::conj(iv(i));
    p(i) = s.real();
    q(i) = s.imag();
  }
}

}  // namespace detail

// Assembles the OPF over the whole network or a bus-id subset.
inline OpfAssembly assemble_opf(const Network& net,
                                const std::optional<std::vector<int>>& scope = std::nullopt) {
  auto ctx = std::make_shared<detail::OpfContext>();
  if (scope) {
    ctx->net = detail::restrict_to_scope(net, std::set<int>(scope->begin(), scope->end()));
  } else {
    ctx->net = net;
    ctx->net.reindex();
  }
  const Network& n = ctx->net;

  if (n.generators.empty() && n.total_p_load() > 0.0)
    throw ValidationError("scope has load but no generators; structurally infeasible");

  ctx->map = build_variable_map(n);
  ctx->y_ac = detail::RowMajorComplex(build_ac_admittance(n));
  ctx->y_dc = detail::RowMajorReal(build_dc_admittance(n));
  ctx->gens_at_bus.assign(n.buses.size(), {});
  ctx->convs_at_bus.assign(n.buses.size(), {});
  for (size_t g = 0; g < n.generators.size(); ++g)
    ctx->gens_at_bus[static_cast<size_t>(n.bus_index(n.generators[g].bus))].push_back(
        static_cast<int>(g));
  for (size_t cidx = 0; cidx < n.converters.size(); ++cidx) {
    ctx->convs_at_bus[static_cast<size_t>(n.bus_index(n.converters[cidx].ac_bus))].push_back(
        static_cast<int>(cidx));
    ctx->convs_at_bus[static_cast<size_t>(n.bus_index(n.converters[cidx].dc_bus))].push_back(
        static_cast<int>(cidx));
  }
  for (int i = 0; i < n.num_ac(); ++i)
    if (n.buses[static_cast<size_t>(n.ac_order()[static_cast<size_t>(i)])].is_ref)
      ctx->ac_refs.push_back(i);
  for (int j = 0; j < n.num_dc(); ++j)
    if (n.buses[static_cast<size_t>(n.dc_order()[static_cast<size_t>(j)])].is_ref)
      ctx->dc_refs.push_back(j);
  ctx->num_eq = 2 * ctx->map.n_ac + ctx->map.n_dc + 2 * static_cast<int>(ctx->ac_refs.size()) +
                static_cast<int>(ctx->dc_refs.size());

  const OpfVariableMap m = ctx->map;
  const double base = n.base_mva;
  const double aq_pu = n.a_q * base * base;  // currency/h per pu^2
  std::shared_ptr<const detail::OpfContext> c = ctx;

  NlpProblem p;
  p.num_vars = m.num_vars;
  p.num_eq = ctx->num_eq;
  p.num_ineq = m.n_conv;

  p.objective = [c, base, aq_pu](const VectorXd& x) {
    const OpfVariableMap& mp = c->map;
    double f = 0.0;
    for (int g = 0; g < mp.n_gen; ++g) {
      const Generator& gen = c->net.generators[static_cast<size_t>(g)];
      if (gen.is_auxiliary) continue;
      f += gen.b_g * base * x(mp.pg(g)) + aq_pu * x(mp.qg(g)) * x(mp.qg(g));
    }
    for (int k = 0; k < mp.n_conv; ++k) f += aq_pu * x(mp.qc(k)) * x(mp.qc(k));
    return f;
  };

  p.gradient = [c, base, aq_pu](const VectorXd& x) {
    const OpfVariableMap& mp = c->map;
    VectorXd g = VectorXd::Zero(mp.num_vars);
    for (int gi = 0; gi < mp.n_gen; ++gi) {
      const Generator& gen = c->net.generators[static_cast<size_t>(gi)];
      if (gen.is_auxiliary) continue;
      g(mp.pg(gi)) = gen.b_g * base;
      g(mp.qg(gi)) = 2.0 * aq_pu * x(mp.qg(gi));
    }
    for (int k = 0; k < mp.n_conv; ++k) g(mp.qc(k)) = 2.0 * aq_pu * x(mp.qc(k));
    return g;
  };

  p.eq_constraints = [c](const VectorXd& x) {
    const OpfVariableMap& mp = c->map;
    const Network& net = c->net;
    VectorXd r = VectorXd::Zero(c->num_eq);
    VectorXd pin, qin;
    detail::ac_injections(*c, x, pin, qin);
    for (int i = 0; i < mp.n_ac; ++i) {
      int bi = net.ac_order()[static_cast<size_t>(i)];
      const Bus& b = net.buses[static_cast<size_t>(bi)];
      double pr = pin(i) + b.p_load;
      double qr = qin(i) + b.q_load;
      for (int g : c->gens_at_bus[static_cast<size_t>(bi)]) {
        pr -= x(mp.pg(g));
        qr -= x(mp.qg(g));
      }
      for (int k : c->convs_at_bus[static_cast<size_t>(bi)]) {
        pr -= x(mp.pc(k));
        qr -= x(mp.qc(k));
      }
      r(c->p_row(i)) = pr;
      r(c->q_row(i)) = qr;
    }
    for (int j = 0; j < mp.n_dc; ++j) {
      int bj = net.dc_order()[static_cast<size_t>(j)];
      const Bus& b = net.buses[static_cast<size_t>(bj)];
      double acc = 0.0;
      for (detail::RowMajorReal::InnerIterator it(c->y_dc, j); it; ++it)
        acc += it.value() * x(mp.vdc(static_cast<int>(it.col())));
      double dr = x(mp.vdc(j)) * acc + b.p_load;
      for (int g : c->gens_at_bus[static_cast<size_t>(bj)]) dr -= x(mp.pg(g));
      for (int k : c->convs_at_bus[static_cast<size_t>(bj)]) {
        const Converter& cv = net.converters[static_cast<size_t>(k)];
        dr += x(mp.pc(k)) + cv.loss(x(mp.pc(k)), x(mp.qc(k)));
      }
      r(c->dc_row(j)) = dr;
    }
    int row = c->slack_rows_start();
    for (int i : c->ac_refs) {
      r(row++) = x(mp.vm(i)) - 1.0;
      r(row++) = x(mp.va(i));
    }
    for (int j : c->dc_refs) r(row++) = x(mp.vdc(j)) - 1.0;
    return r;
  };

  p.eq_jacobian = [c](const VectorXd& x) {
    const OpfVariableMap& mp = c->map;
    const Network& net = c->net;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<size_t>(c->y_ac.nonZeros() * 8 + c->y_dc.nonZeros() * 3 + 16));

    // AC rows. Diagonal accumulators collect the i==l contributions.
    for (int i = 0; i < mp.n_ac; ++i) {
      double dp_dvmi = 0.0, dp_dvai = 0.0, dq_dvmi = 0.0, dq_dvai = 0.0;
      const double vmi = x(mp.vm(i)), vai = x(mp.va(i));
      for (detail::RowMajorComplex::InnerIterator it(c->y_ac, i); it; ++it) {
        const int l = static_cast<int>(it.col());
        const double gil = it.value().real(), bil = it.value().imag();
        if (l == i) {
          dp_dvmi += 2.0 * vmi * gil;
          dq_dvmi += -2.0 * vmi * bil;
          continue;
        }
        const double vml = x(mp.vm(l));
        const double th = vai - x(mp.va(l));
        const double tt = gil * std::cos(th) + bil * std::sin(th);
        const double uu = gil * std::sin(th) - bil * std::cos(th);
        dp_dvmi += vml * tt;
        dq_dvmi += vml * uu;
        dp_dvai += -vmi * vml * uu;
        dq_dvai += vmi * vml * tt;
        t.emplace_back(c->p_row(i), mp.vm(l), vmi * tt);
        t.emplace_back(c->p_row(i), mp.va(l), vmi * vml * uu);
        t.emplace_back(c->q_row(i), mp.vm(l), vmi * uu);
        t.emplace_back(c->q_row(i), mp.va(l), -vmi * vml * tt);
      }
      t.emplace_back(c->p_row(i), mp.vm(i), dp_dvmi);
      t.emplace_back(c->p_row(i), mp.va(i), dp_dvai);
      t.emplace_back(c->q_row(i), mp.vm(i), dq_dvmi);
      t.emplace_back(c->q_row(i), mp.va(i), dq_dvai);

      int bi = net.ac_order()[static_cast<size_t>(i)];
      for (int g : c->gens_at_bus[static_cast<size_t>(bi)]) {
        t.emplace_back(c->p_row(i), mp.pg(g), -1.0);
        t.emplace_back(c->q_row(i), mp.qg(g), -1.0);
      }
      for (int k : c->convs_at_bus[static_cast<size_t>(bi)]) {
        t.emplace_back(c->p_row(i), mp.pc(k), -1.0);
        t.emplace_back(c->q_row(i), mp.qc(k), -1.0);
      }
    }

    // DC rows.
    for (int j = 0; j < mp.n_dc; ++j) {
      double acc = 0.0;
      for (detail::RowMajorReal::InnerIterator it(c->y_dc, j); it; ++it)
        acc += it.value() * x(mp.vdc(static_cast<int>(it.col())));
      for (detail::RowMajorReal::InnerIterator it(c->y_dc, j); it; ++it) {
        const int l = static_cast<int>(it.col());
        double d = x(mp.vdc(j)) * it.value();
        if (l == j) d += acc;
        t.emplace_back(c->dc_row(j), mp.vdc(l), d);
      }
      int bj = net.dc_order()[static_cast<size_t>(j)];
      for (int g : c->gens_at_bus[static_cast<size_t>(bj)])
        t.emplace_back(c->dc_row(j), mp.pg(g), -1.0);
      for (int k : c->convs_at_bus[static_cast<size_t>(bj)]) {
        const Converter& cv = net.converters[static_cast<size_t>(k)];
        t.emplace_back(c->dc_row(j), mp.pc(k), 1.0 + 2.0 * cv.c2() * x(mp.pc(k)));
        t.emplace_back(c->dc_row(j), mp.qc(k), 2.0 * cv.c2() * x(mp.qc(k)));
      }
    }

    int row = c->slack_rows_start();
    for (int i : c->ac_refs) {
      t.emplace_back(row++, mp.vm(i), 1.0);
      t.emplace_back(row++, mp.va(i), 1.0);
    }
    for (int j : c->dc_refs) t.emplace_back(row++, mp.vdc(j), 1.0);

    SparseReal jac(c->num_eq, mp.num_vars);
    jac.setFromTriplets(t.begin(), t.end());
    return jac;
  };

  if (m.n_conv > 0) {
    p.ineq_constraints = [c](const VectorXd& x) {
      const OpfVariableMap& mp = c->map;
      VectorXd h(mp.n_conv);
      for (int k = 0; k < mp.n_conv; ++k) {
        const Converter& cv = c->net.converters[static_cast<size_t>(k)];
        h(k) = x(mp.pc(k)) * x(mp.pc(k)) + x(mp.qc(k)) * x(mp.qc(k)) - cv.s_rated * cv.s_rated;
      }
      return h;
    };
    p.ineq_jacobian = [c](const VectorXd& x) {
      const OpfVariableMap& mp = c->map;
      std::vector<Eigen::Triplet<double>> t;
      for (int k = 0; k < mp.n_conv; ++k) {
        t.emplace_back(k, mp.pc(k), 2.0 * x(mp.pc(k)));
        t.emplace_back(k, mp.qc(k), 2.0 * x(mp.qc(k)));
      }
      SparseReal jac(mp.n_conv, mp.num_vars);
      jac.setFromTriplets(t.begin(), t.end());
      return jac;
    };
  }

  p.lagrangian_hessian = [c, aq_pu](const VectorXd& x, double sf, const VectorXd& ye,
                                    const VectorXd& yi) {
    const OpfVariableMap& mp = c->map;
    const Network& net = c->net;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<size_t>(c->y_ac.nonZeros() * 14 + c->y_dc.nonZeros() * 2 + 16));

    // Objective block.
    for (int g = 0; g < mp.n_gen; ++g)
      if (!net.generators[static_cast<size_t>(g)].is_auxiliary)
        t.emplace_back(mp.qg(g), mp.qg(g), 2.0 * aq_pu * sf);
    for (int k = 0; k < mp.n_conv; ++k) t.emplace_back(mp.qc(k), mp.qc(k), 2.0 * aq_pu * sf);

    // AC balance rows: for each directed pair (i,l), the multiplier-weighted
    // second derivatives of vmi*vml*T and vmi*vml*U.
    for (int i = 0; i < mp.n_ac; ++i) {
      const double wp = ye(c->p_row(i));
      const double wq = ye(c->q_row(i));
      const double vmi = x(mp.vm(i)), vai = x(mp.va(i));
      for (detail::RowMajorComplex::InnerIterator it(c->y_ac, i); it; ++it) {
        const int l = static_cast<int>(it.col());
        const double gil = it.value().real(), bil = it.value().imag();
        if (l == i) {
          t.emplace_back(mp.vm(i), mp.vm(i), 2.0 * (wp * gil - wq * bil));
          continue;
        }
        const double vml = x(mp.vm(l));
        const double th = vai - x(mp.va(l));
        const double tt = gil * std::cos(th) + bil * std::sin(th);
        const double uu = gil * std::sin(th) - bil * std::cos(th);

        // d2(vmi*vml*T)/... weighted wp plus d2(vmi*vml*U)/... weighted wq.
        const double c_mm = wp * tt + wq * uu;
        t.emplace_back(mp.vm(i), mp.vm(l), c_mm);
        t.emplace_back(mp.vm(l), mp.vm(i), c_mm);

        const double c_mi_ai = wp * (-vml * uu) + wq * (vml * tt);
        t.emplace_back(mp.vm(i), mp.va(i), c_mi_ai);
        t.emplace_back(mp.va(i), mp.vm(i), c_mi_ai);

        const double c_mi_al = wp * (vml * uu) + wq * (-vml * tt);
        t.emplace_back(mp.vm(i), mp.va(l), c_mi_al);
        t.emplace_back(mp.va(l), mp.vm(i), c_mi_al);

        const double c_ml_ai = wp * (-vmi * uu) + wq * (vmi * tt);
        t.emplace_back(mp.vm(l), mp.va(i), c_ml_ai);
        t.emplace_back(mp.va(i), mp.vm(l), c_ml_ai);

        const double c_ml_al = wp * (vmi * uu) + wq * (-vmi * tt);
        t.emplace_back(mp.vm(l), mp.va(l), c_ml_al);
        t.emplace_back(mp.va(l), mp.vm(l), c_ml_al);

        const double c_aa = wp * (vmi * vml * tt) + wq * (vmi * vml * uu);
        t.emplace_back(mp.va(i), mp.va(i), -c_aa);
        t.emplace_back(mp.va(l), mp.va(l), -c_aa);
        t.emplace_back(mp.va(i), mp.va(l), c_aa);
        t.emplace_back(mp.va(l), mp.va(i), c_aa);
      }
    }

    // DC balance rows.
    for (int j = 0; j < mp.n_dc; ++j) {
      const double w = ye(c->dc_row(j));
      for (detail::RowMajorReal::InnerIterator it(c->y_dc, j); it; ++it) {
        const int l = static_cast<int>(it.col());
        t.emplace_back(mp.vdc(j), mp.vdc(l), w * it.value());
        t.emplace_back(mp.vdc(l), mp.vdc(j), w * it.value());
      }
      int bj = net.dc_order()[static_cast<size_t>(j)];
      for (int k : c->convs_at_bus[static_cast<size_t>(bj)]) {
        const Converter& cv = net.converters[static_cast<size_t>(k)];
        t.emplace_back(mp.pc(k), mp.pc(k), 2.0 * cv.c2() * w);
        t.emplace_back(mp.qc(k), mp.qc(k), 2.0 * cv.c2() * w);
      }
    }

    // Converter capability rows.
    for (int k = 0; k < mp.n_conv; ++k) {
      t.emplace_back(mp.pc(k), mp.pc(k), 2.0 * yi(k));
      t.emplace_back(mp.qc(k), mp.qc(k), 2.0 * yi(k));
    }

    SparseReal h(mp.num_vars, mp.num_vars);
    h.setFromTriplets(t.begin(), t.end());
    return h;
  };

  // Bounds and start point.
  p.lower = VectorXd::Constant(m.num_vars, -kInf);
  p.upper = VectorXd::Constant(m.num_vars, kInf);
  for (int i = 0; i < m.n_ac; ++i) {
    const Bus& b = n.buses[static_cast<size_t>(n.ac_order()[static_cast<size_t>(i)])];
    p.lower(m.vm(i)) = b.v_min;
    p.upper(m.vm(i)) = b.v_max;
  }
  for (int j = 0; j < m.n_dc; ++j) {
    const Bus& b = n.buses[static_cast<size_t>(n.dc_order()[static_cast<size_t>(j)])];
    p.lower(m.vdc(j)) = b.v_min;
    p.upper(m.vdc(j)) = b.v_max;
  }
  for (int g = 0; g < m.n_gen; ++g) {
    const Generator& gen = n.generators[static_cast<size_t>(g)];
    p.lower(m.pg(g)) = gen.p_min;
    p.upper(m.pg(g)) = gen.p_max;
    p.lower(m.qg(g)) = gen.q_min;
    p.upper(m.qg(g)) = gen.q_max;
  }
  for (int k = 0; k < m.n_conv; ++k) {
    const Converter& cv = n.converters[static_cast<size_t>(k)];
    p.lower(m.pc(k)) = -cv.s_rated;
    p.upper(m.pc(k)) = cv.s_rated;
    p.lower(m.qc(k)) = -cv.s_rated;
    p.upper(m.qc(k)) = cv.s_rated;
  }
  p.x0 = detail::flat_start(*ctx);

  OpfAssembly out;
  out.ctx = std::move(ctx);
  out.problem = std::move(p);
  return out;
}

// --- solution handling ----------------------------------------------------

struct OpfSolution {
  // Aligned with the owning network's buses/generators/converters vectors.
  VectorXd bus_v;   // AC: magnitude, DC: voltage (pu)
  VectorXd bus_va;  // AC: angle in radians, DC entries 0
  VectorXd gen_p, gen_q;
  VectorXd conv_p, conv_q, conv_loss;
  VectorXd price_p, price_q;  // per-bus balance multipliers (currency per pu*h); q is 0 on DC
  double objective = 0.0;
  NlpStatus status = NlpStatus::NumericalFailure;
  KktResiduals kkt;
  int iterations = 0;
};

inline OpfSolution solution_from_nlp(const OpfAssembly& a, const NlpSolution& s) {
  const Network& n = a.net();
  const OpfVariableMap& m = a.map();
  OpfSolution out;
  const int nb = static_cast<int>(n.buses.size());
  out.bus_v = VectorXd::Zero(nb);
  out.bus_va = VectorXd::Zero(nb);
  out.price_p = VectorXd::Zero(nb);
  out.price_q = VectorXd::Zero(nb);
  for (int i = 0; i < m.n_ac; ++i) {
    int bi = n.ac_order()[static_cast<size_t>(i)];
    out.bus_v(bi) = s.x(m.vm(i));
    out.bus_va(bi) = s.x(m.va(i));
    out.price_p(bi) = s.y_eq(a.p_row(i));
    out.price_q(bi) = s.y_eq(a.q_row(i));
  }
  for (int j = 0; j < m.n_dc; ++j) {
    int bj = n.dc_order()[static_cast<size_t>(j)];
    out.bus_v(bj) = s.x(m.vdc(j));
    out.price_p(bj) = s.y_eq(a.dc_row(j));
  }
  out.gen_p.resize(m.n_gen);
  out.gen_q.resize(m.n_gen);
  for (int g = 0; g < m.n_gen; ++g) {
    out.gen_p(g) = s.x(m.pg(g));
    out.gen_q(g) = s.x(m.qg(g));
  }
  out.conv_p.resize(m.n_conv);
  out.conv_q.resize(m.n_conv);
  out.conv_loss.resize(m.n_conv);
  for (int k = 0; k < m.n_conv; ++k) {
    out.conv_p(k) = s.x(m.pc(k));
    out.conv_q(k) = s.x(m.qc(k));
    out.conv_loss(k) =
        n.converters[static_cast<size_t>(k)].loss(out.conv_p(k), out.conv_q(k));
  }
  out.objective = s.objective;
  out.status = s.status;
  out.kkt = s.kkt;
  out.iterations = s.iterations;
  return out;
}

// Inverse of solution_from_nlp's variable mapping (multipliers excluded);
// used when a known solution must be re-expressed as an NLP point.
inline VectorXd nlp_point_from_solution(const OpfAssembly& a, const OpfSolution& sol) {
  const Network& n = a.net();
  const OpfVariableMap& m = a.map();
  VectorXd x = VectorXd::Zero(m.num_vars);
  for (int i = 0; i < m.n_ac; ++i) {
    int bi = n.ac_order()[static_cast<size_t>(i)];
    x(m.vm(i)) = sol.bus_v(bi);
    x(m.va(i)) = sol.bus_va(bi);
  }
  for (int j = 0; j < m.n_dc; ++j) x(m.vdc(j)) = sol.bus_v(n.dc_order()[static_cast<size_t>(j)]);
  for (int g = 0; g < m.n_gen; ++g) {
    x(m.pg(g)) = sol.gen_p(g);
    x(m.qg(g)) = sol.gen_q(g);
  }
  for (int k = 0; k < m.n_conv; ++k) {
    x(m.pc(k)) = sol.conv_p(k);
    x(m.qc(k)) = sol.conv_q(k);
  }
  return x;
}

struct BalanceResiduals {
  VectorXd p_ac;  // per AC bus, left minus right of the active balance
  VectorXd q_ac;
  VectorXd dc;
  double max_abs() const {
    double v = 0.0;
    if (p_ac.size()) v = std::max(v, p_ac.cwiseAbs().maxCoeff());
    if (q_ac.size()) v = std::max(v, q_ac.cwiseAbs().maxCoeff());
    if (dc.size()) v = std::max(v, dc.cwiseAbs().maxCoeff());
    return v;
  }
};

// Solver-independent audit of the power balance at a given operating
// point: recomputes bus injections from the voltages and subtracts the
// device injections and loads.
inline BalanceResiduals evaluate_balance(const Network& net, const OpfSolution& sol) {
  BalanceResiduals res;
  const int n_ac = net.num_ac(), n_dc = net.num_dc();
  res.p_ac = VectorXd::Zero(n_ac);
  res.q_ac = VectorXd::Zero(n_ac);
  res.dc = VectorXd::Zero(n_dc);

  SparseComplex y = build_ac_admittance(net);
  Eigen::VectorXcd v(n_ac);
  for (int i = 0; i < n_ac; ++i) {
    int bi = net.ac_order()[static_cast<size_t>(i)];
    v(i) = std::polar(sol.bus_v(bi), sol.bus_va(bi));
  }
  Eigen::VectorXcd iv = y * v;
  for (int i = 0; i < n_ac; ++i) {
    int bi = net.ac_order()[static_cast<size_t>(i)];
    const Bus& b = net.buses[static_cast<size_t>(bi)];
    Complex s = v(i) * std::conj(iv(i));
    res.p_ac(i) = s.real() + b.p_load;
    res.q_ac(i) = s.imag() + b.q_load;
  }
  SparseReal ydc = build_dc_admittance(net);
  Eigen::VectorXd vdc(n_dc);
  for (int j = 0; j < n_dc; ++j) vdc(j) = sol.bus_v(net.dc_order()[static_cast<size_t>(j)]);
  Eigen::VectorXd idc = ydc * vdc;
  for (int j = 0; j < n_dc; ++j) {
    int bj = net.dc_order()[static_cast<size_t>(j)];
    res.dc(j) = vdc(j) * idc(j) + net.buses[static_cast<size_t>(bj)].p_load;
  }

  for (size_t g = 0; g < net.generators.size(); ++g) {
    int bi = net.bus_index(net.generators[g].bus);
    const Bus& b = net.buses[static_cast<size_t>(bi)];
    if (b.kind == BusKind::AC) {
      res.p_ac(net.ac_position(bi)) -= sol.gen_p(static_cast<int>(g));
      res.q_ac(net.ac_position(bi)) -= sol.gen_q(static_cast<int>(g));
    } else {
      res.dc(net.dc_position(bi)) -= sol.gen_p(static_cast<int>(g));
    }
  }
  for (size_t k = 0; k < net.converters.size(); ++k) {
    const Converter& cv = net.converters[k];
    int ai = net.ac_position(net.bus_index(cv.ac_bus));
    int dj = net.dc_position(net.bus_index(cv.dc_bus));
    res.p_ac(ai) -= sol.conv_p(static_cast<int>(k));
    res.q_ac(ai) -= sol.conv_q(static_cast<int>(k));
    res.dc(dj) += sol.conv_p(static_cast<int>(k)) +
                  cv.loss(sol.conv_p(static_cast<int>(k)), sol.conv_q(static_cast<int>(k)));
  }
  return res;
}

}  // namespace acdcopf
