#pragma once

// Tie-line decoupling. Every branch whose endpoints carry different
// region tags is cut in half: each region receives an auxiliary midpoint
// bus, a half-impedance branch, and a zero-cost auxiliary generator that
// stands in for the neighbor. Boundary consistency becomes the consensus
// system sum_k A_k x_k = 0 with, per AC cut, rows (|V|, angle, P, Q) and,
// per DC cut, rows (V, P). Voltage rows are equalities (+1/-1), power
// rows are anti-symmetric (+1/+1).

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "acdcopf/network.hpp"
#include "acdcopf/opf.hpp"

namespace acdcopf {

enum class RowKind : std::uint8_t { AcVmag, AcVang, AcPgen, AcQgen, DcV, DcPgen };

inline bool is_voltage_row(RowKind k) {
  return k == RowKind::AcVmag || k == RowKind::AcVang || k == RowKind::DcV;
}
inline bool is_dc_row(RowKind k) { return k == RowKind::DcV || k == RowKind::DcPgen; }

inline const char* to_string(RowKind k) {
  switch (k) {
    case RowKind::AcVmag: return "ac_vmag";
    case RowKind::AcVang: return "ac_vang";
    case RowKind::AcPgen: return "ac_p";
    case RowKind::AcQgen: return "ac_q";
    case RowKind::DcV: return "dc_v";
    case RowKind::DcPgen: return "dc_p";
  }
  return "?";
}

struct TieCut {
  int branch = -1;  // index into the original branch list
  BusKind kind = BusKind::AC;
  std::string region_a, region_b;  // from-side, to-side
  int aux_bus_a = -1, aux_bus_b = -1;  // new midpoint bus ids
  int aux_gen_a = -1, aux_gen_b = -1;  // generator indices within each subnet
  int first_row = -1;  // first global consensus row of this cut
  int num_rows = 0;    // 4 for AC, 2 for DC
};

struct GlobalRowMeta {
  int tie = -1;
  RowKind kind = RowKind::AcVmag;
};

// One coupling row as seen from one region: a single +-1 coefficient on
// one of its variables.
struct LocalRow {
  int global_row = -1;
  int tie = -1;
  RowKind kind = RowKind::AcVmag;
  int side = 0;       // 0 = region_a, 1 = region_b
  int var = -1;       // variable index in the region's OpfVariableMap
  double coeff = 1.0; // global sign convention
};

struct RegionalProblem {
  std::string region;
  Network subnet;
  OpfVariableMap map;
  SparseReal a;                  // global consensus rows x local variables
  std::vector<LocalRow> rows;    // rows with a nonzero in this region
  std::vector<int> boundary_vars;
};

struct Partition {
  Network original;
  std::vector<std::string> region_names;  // sorted
  std::vector<TieCut> cuts;
  std::vector<GlobalRowMeta> row_meta;
  int num_rows = 0;
  std::vector<RegionalProblem> regions;

  int region_index(const std::string& name) const {
    for (size_t i = 0; i < region_names.size(); ++i)
      if (region_names[i] == name) return static_cast<int>(i);
    throw ValidationError("unknown region '" + name + "'");
  }
};

class PartitionError : public std::runtime_error {
 public:
  explicit PartitionError(const std::string& m) : std::runtime_error(m) {}
};

inline Partition partition_network(const Network& input,
                                   const std::optional<std::vector<std::string>>& region_list =
                                       std::nullopt) {
  Partition part;
  part.original = input;
  part.original.reindex();
  // is_tie is derived state; a branch marked as tie whose endpoints share
  // a region means the caller's flags and tags disagree.
  for (const Branch& br : part.original.branches)
    if (br.is_tie && part.original.bus(br.from).region == part.original.bus(br.to).region)
      throw PartitionError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                           " is marked as a tie but both endpoints are in region '" +
                           part.original.bus(br.from).region + "'");
  part.original.validate();
  const Network& net = part.original;

  std::set<std::string> tags;
  for (const Bus& b : net.buses) {
    if (b.region.empty())
      throw PartitionError("bus " + std::to_string(b.id) + " has no region tag");
    tags.insert(b.region);
  }
  if (region_list) {
    std::set<std::string> declared(region_list->begin(), region_list->end());
    for (const auto& t : tags)
      if (!declared.count(t))
        throw PartitionError("bus region '" + t + "' is not in the declared region list");
    for (const auto& d : declared)
      if (!tags.count(d)) throw PartitionError("region '" + d + "' has no buses");
  }
  part.region_names.assign(tags.begin(), tags.end());

  for (const Converter& c : net.converters)
    if (net.bus(c.ac_bus).region != net.bus(c.dc_bus).region)
      throw PartitionError("converter " + std::to_string(c.ac_bus) + "-" +
                           std::to_string(c.dc_bus) +
                           " spans two regions; only lines can be cut");

  // Auxiliary generator capability: generous enough never to bind at the
  // interchange optimum, finite to keep subproblems bounded.
  const double aux_cap = std::max(1.1 * net.total_p_load(), 1.0);

  int next_id = 0;
  for (const Bus& b : net.buses) next_id = std::max(next_id, b.id);
  ++next_id;

  // Start each region's subnet with its own equipment.
  std::map<std::string, Network> subnets;
  for (const auto& r : part.region_names) {
    Network& sn = subnets[r];
    sn.base_mva = net.base_mva;
    sn.a_q = net.a_q;
    sn.role = NetworkRole::Regional;
  }
  for (const Bus& b : net.buses) subnets[b.region].buses.push_back(b);
  for (const Branch& br : net.branches)
    if (!br.is_tie) subnets[net.bus(br.from).region].branches.push_back(br);
  for (const Generator& g : net.generators) subnets[net.bus(g.bus).region].generators.push_back(g);
  for (const Converter& c : net.converters) subnets[net.bus(c.ac_bus).region].converters.push_back(c);

  auto bus_in_subnet = [](Network& sn, int id) -> Bus& {
    for (Bus& b : sn.buses)
      if (b.id == id) return b;
    throw PartitionError("internal: bus not in subnet");
  };

  for (size_t bi = 0; bi < net.branches.size(); ++bi) {
    const Branch& br = net.branches[bi];
    if (!br.is_tie) continue;
    const Bus& fb = net.bus(br.from);
    const Bus& tb = net.bus(br.to);

    TieCut cut;
    cut.branch = static_cast<int>(bi);
    cut.kind = fb.kind;
    cut.region_a = fb.region;
    cut.region_b = tb.region;
    cut.aux_bus_a = next_id++;
    cut.aux_bus_b = next_id++;
    cut.first_row = part.num_rows;
    cut.num_rows = fb.kind == BusKind::AC ? 4 : 2;

    for (int side = 0; side < 2; ++side) {
      Network& sn = subnets[side == 0 ? cut.region_a : cut.region_b];
      Bus aux;
      aux.id = side == 0 ? cut.aux_bus_a : cut.aux_bus_b;
      aux.kind = fb.kind;
      aux.v_min = std::min(fb.v_min, tb.v_min);
      aux.v_max = std::max(fb.v_max, tb.v_max);
      aux.region = side == 0 ? cut.region_a : cut.region_b;
      aux.is_auxiliary = true;
      sn.buses.push_back(aux);

      Branch half;
      half.from = side == 0 ? br.from : aux.id;
      half.to = side == 0 ? aux.id : br.to;
      half.r = br.r / 2.0;
      half.x = br.x / 2.0;
      half.b_charge = 0.0;
      sn.branches.push_back(half);

      // The cut line's charging stays with the surviving endpoint as a bus
      // shunt; the midpoint carries none, so the two halves recompose to
      // exactly the original pi section.
      if (fb.kind == BusKind::AC && br.b_charge != 0.0)
        bus_in_subnet(sn, side == 0 ? br.from : br.to).b_shunt += br.b_charge / 2.0;

      Generator aux_gen;
      aux_gen.bus = aux.id;
      aux_gen.p_min = -aux_cap;
      aux_gen.p_max = aux_cap;
      if (fb.kind == BusKind::AC) {
        aux_gen.q_min = -aux_cap;
        aux_gen.q_max = aux_cap;
      }
      aux_gen.b_g = 0.0;
      aux_gen.is_auxiliary = true;
      sn.generators.push_back(aux_gen);
      int gen_idx = static_cast<int>(sn.generators.size()) - 1;
      if (side == 0)
        cut.aux_gen_a = gen_idx;
      else
        cut.aux_gen_b = gen_idx;
    }

    if (fb.kind == BusKind::AC) {
      for (RowKind k : {RowKind::AcVmag, RowKind::AcVang, RowKind::AcPgen, RowKind::AcQgen})
        part.row_meta.push_back({static_cast<int>(part.cuts.size()), k});
    } else {
      for (RowKind k : {RowKind::DcV, RowKind::DcPgen})
        part.row_meta.push_back({static_cast<int>(part.cuts.size()), k});
    }
    part.num_rows += cut.num_rows;
    part.cuts.push_back(cut);
  }

  // Finalize regional problems.
  for (const auto& rname : part.region_names) {
    RegionalProblem rp;
    rp.region = rname;
    rp.subnet = subnets[rname];
    rp.subnet.validate();
    rp.map = build_variable_map(rp.subnet);
    part.regions.push_back(std::move(rp));
  }

  // Coupling rows per region.
  for (size_t t = 0; t < part.cuts.size(); ++t) {
    const TieCut& cut = part.cuts[t];
    for (int side = 0; side < 2; ++side) {
      RegionalProblem& rp =
          part.regions[static_cast<size_t>(part.region_index(side == 0 ? cut.region_a : cut.region_b))];
      const Network& sn = rp.subnet;
      int aux_id = side == 0 ? cut.aux_bus_a : cut.aux_bus_b;
      int aux_gen = side == 0 ? cut.aux_gen_a : cut.aux_gen_b;
      int aux_idx = sn.bus_index(aux_id);
      for (int r = 0; r < cut.num_rows; ++r) {
        LocalRow row;
        row.global_row = cut.first_row + r;
        row.tie = static_cast<int>(t);
        row.kind = part.row_meta[static_cast<size_t>(row.global_row)].kind;
        row.side = side;
        switch (row.kind) {
          case RowKind::AcVmag: row.var = rp.map.vm(sn.ac_position(aux_idx)); break;
          case RowKind::AcVang: row.var = rp.map.va(sn.ac_position(aux_idx)); break;
          case RowKind::AcPgen: row.var = rp.map.pg(aux_gen); break;
          case RowKind::AcQgen: row.var = rp.map.qg(aux_gen); break;
          case RowKind::DcV: row.var = rp.map.vdc(sn.dc_position(aux_idx)); break;
          case RowKind::DcPgen: row.var = rp.map.pg(aux_gen); break;
        }
        row.coeff = is_voltage_row(row.kind) && side == 1 ? -1.0 : 1.0;
        rp.rows.push_back(row);
        rp.boundary_vars.push_back(row.var);
      }
    }
  }
  for (RegionalProblem& rp : part.regions) {
    std::vector<Eigen::Triplet<double>> trip;
    for (const LocalRow& r : rp.rows) trip.emplace_back(r.global_row, r.var, r.coeff);
    rp.a.resize(part.num_rows, rp.map.num_vars);
    rp.a.setFromTriplets(trip.begin(), trip.end());
  }
  return part;
}

// --- splitting a centralized solution across regions ----------------------

// Maps a solution of the original network onto each region's variable
// space, computing exact midpoint voltages and anti-symmetric auxiliary
// injections for every cut. The resulting stack satisfies the consensus
// system exactly (both copies are assigned the same midpoint value; the
// opposite injection is an exact negation).
inline std::vector<VectorXd> split_solution(const Partition& part, const OpfSolution& central) {
  const Network& net = part.original;
  std::vector<VectorXd> xs;
  for (size_t k = 0; k < part.regions.size(); ++k)
    xs.push_back(VectorXd::Zero(part.regions[k].map.num_vars));

  // Original equipment carries over by id.
  for (size_t k = 0; k < part.regions.size(); ++k) {
    const RegionalProblem& rp = part.regions[k];
    const Network& sn = rp.subnet;
    const OpfVariableMap& m = rp.map;
    VectorXd& x = xs[k];
    for (size_t i = 0; i < sn.buses.size(); ++i) {
      const Bus& b = sn.buses[i];
      if (b.is_auxiliary) continue;
      int oi = net.bus_index(b.id);
      if (b.kind == BusKind::AC) {
        x(m.vm(sn.ac_position(static_cast<int>(i)))) = central.bus_v(oi);
        x(m.va(sn.ac_position(static_cast<int>(i)))) = central.bus_va(oi);
      } else {
        x(m.vdc(sn.dc_position(static_cast<int>(i)))) = central.bus_v(oi);
      }
    }
  }

  // Generators and converters: regional subnets preserve the original
  // relative order, so walk the original lists and route by region.
  {
    std::map<std::string, int> gen_cursor, conv_cursor;
    for (size_t g = 0; g < net.generators.size(); ++g) {
      const std::string& r = net.bus(net.generators[g].bus).region;
      int k = part.region_index(r);
      int local = gen_cursor[r]++;
      xs[static_cast<size_t>(k)](part.regions[static_cast<size_t>(k)].map.pg(local)) =
          central.gen_p(static_cast<int>(g));
      xs[static_cast<size_t>(k)](part.regions[static_cast<size_t>(k)].map.qg(local)) =
          central.gen_q(static_cast<int>(g));
    }
    for (size_t c = 0; c < net.converters.size(); ++c) {
      const std::string& r = net.bus(net.converters[c].ac_bus).region;
      int k = part.region_index(r);
      int local = conv_cursor[r]++;
      xs[static_cast<size_t>(k)](part.regions[static_cast<size_t>(k)].map.pc(local)) =
          central.conv_p(static_cast<int>(c));
      xs[static_cast<size_t>(k)](part.regions[static_cast<size_t>(k)].map.qc(local)) =
          central.conv_q(static_cast<int>(c));
    }
  }

  // Midpoint state per cut.
  for (const TieCut& cut : part.cuts) {
    const Branch& br = net.branches[static_cast<size_t>(cut.branch)];
    int ka = part.region_index(cut.region_a);
    int kb = part.region_index(cut.region_b);
    const RegionalProblem& ra = part.regions[static_cast<size_t>(ka)];
    const RegionalProblem& rb = part.regions[static_cast<size_t>(kb)];
    int fa = net.bus_index(br.from), tb_i = net.bus_index(br.to);

    if (cut.kind == BusKind::AC) {
      Complex vf = std::polar(central.bus_v(fa), central.bus_va(fa));
      Complex vt = std::polar(central.bus_v(tb_i), central.bus_va(tb_i));
      Complex vmid = 0.5 * (vf + vt);
      Complex z_half = br.series_impedance() / 2.0;
      Complex s_a = vmid * std::conj((vmid - vf) / z_half);
      double vm = std::abs(vmid), va = std::arg(vmid);

      int aux_a = ra.subnet.bus_index(cut.aux_bus_a);
      xs[static_cast<size_t>(ka)](ra.map.vm(ra.subnet.ac_position(aux_a))) = vm;
      xs[static_cast<size_t>(ka)](ra.map.va(ra.subnet.ac_position(aux_a))) = va;
      xs[static_cast<size_t>(ka)](ra.map.pg(cut.aux_gen_a)) = s_a.real();
      xs[static_cast<size_t>(ka)](ra.map.qg(cut.aux_gen_a)) = s_a.imag();

      int aux_b = rb.subnet.bus_index(cut.aux_bus_b);
      xs[static_cast<size_t>(kb)](rb.map.vm(rb.subnet.ac_position(aux_b))) = vm;
      xs[static_cast<size_t>(kb)](rb.map.va(rb.subnet.ac_position(aux_b))) = va;
      xs[static_cast<size_t>(kb)](rb.map.pg(cut.aux_gen_b)) = -s_a.real();
      xs[static_cast<size_t>(kb)](rb.map.qg(cut.aux_gen_b)) = -s_a.imag();
    } else {
      double vf = central.bus_v(fa), vt = central.bus_v(tb_i);
      double vmid = 0.5 * (vf + vt);
      double p_a = vmid * (vmid - vf) / (br.r / 2.0);
      xs[static_cast<size_t>(ka)](ra.map.vdc(ra.subnet.dc_position(ra.subnet.bus_index(cut.aux_bus_a)))) = vmid;
      xs[static_cast<size_t>(ka)](ra.map.pg(cut.aux_gen_a)) = p_a;
      xs[static_cast<size_t>(kb)](rb.map.vdc(rb.subnet.dc_position(rb.subnet.bus_index(cut.aux_bus_b)))) = vmid;
      xs[static_cast<size_t>(kb)](rb.map.pg(cut.aux_gen_b)) = -p_a;
    }
  }
  return xs;
}

// --- merging regional solutions back onto the original network ------------

struct RowMismatch {
  int global_row = -1;
  int tie = -1;
  RowKind kind = RowKind::AcVmag;
  double value = 0.0;
};

class MergeError : public std::runtime_error {
 public:
  MergeError(std::string msg, std::vector<RowMismatch> rows)
      : std::runtime_error(std::move(msg)), violations(std::move(rows)) {}
  std::vector<RowMismatch> violations;
};

// Stacked consensus residual sum_k A_k x_k per global row.
inline VectorXd consensus_residual(const Partition& part, const std::vector<VectorXd>& xs) {
  VectorXd r = VectorXd::Zero(part.num_rows);
  for (size_t k = 0; k < part.regions.size(); ++k)
    for (const LocalRow& row : part.regions[k].rows)
      r(row.global_row) += row.coeff * xs[k](row.var);
  return r;
}

// Merges per-region solutions onto the original network. Boundary
// (midpoint) quantities are averaged across their two copies for the
// per-tie report; original equipment takes its owning region's values.
inline OpfSolution reconstruct(const Partition& part, const std::vector<VectorXd>& xs,
                               double tolerance) {
  VectorXd resid = consensus_residual(part, xs);
  std::vector<RowMismatch> bad;
  for (int r = 0; r < part.num_rows; ++r)
    if (std::abs(resid(r)) > tolerance)
      bad.push_back({r, part.row_meta[static_cast<size_t>(r)].tie,
                     part.row_meta[static_cast<size_t>(r)].kind, resid(r)});
  if (!bad.empty())
    throw MergeError("consensus residual above tolerance on " + std::to_string(bad.size()) +
                         " rows; refusing to merge",
                     std::move(bad));

  const Network& net = part.original;
  OpfSolution out;
  const int nb = static_cast<int>(net.buses.size());
  out.bus_v = VectorXd::Zero(nb);
  out.bus_va = VectorXd::Zero(nb);
  out.price_p = VectorXd::Zero(nb);
  out.price_q = VectorXd::Zero(nb);
  out.gen_p.resize(static_cast<int>(net.generators.size()));
  out.gen_q.resize(static_cast<int>(net.generators.size()));
  out.conv_p.resize(static_cast<int>(net.converters.size()));
  out.conv_q.resize(static_cast<int>(net.converters.size()));
  out.conv_loss.resize(static_cast<int>(net.converters.size()));

  for (size_t k = 0; k < part.regions.size(); ++k) {
    const RegionalProblem& rp = part.regions[k];
    const Network& sn = rp.subnet;
    for (size_t i = 0; i < sn.buses.size(); ++i) {
      const Bus& b = sn.buses[i];
      if (b.is_auxiliary) continue;
      int oi = net.bus_index(b.id);
      if (b.kind == BusKind::AC) {
        out.bus_v(oi) = xs[k](rp.map.vm(sn.ac_position(static_cast<int>(i))));
        out.bus_va(oi) = xs[k](rp.map.va(sn.ac_position(static_cast<int>(i))));
      } else {
        out.bus_v(oi) = xs[k](rp.map.vdc(sn.dc_position(static_cast<int>(i))));
      }
    }
  }
  {
    std::map<std::string, int> gen_cursor, conv_cursor;
    for (size_t g = 0; g < net.generators.size(); ++g) {
      const std::string& r = net.bus(net.generators[g].bus).region;
      size_t k = static_cast<size_t>(part.region_index(r));
      int local = gen_cursor[r]++;
      out.gen_p(static_cast<int>(g)) = xs[k](part.regions[k].map.pg(local));
      out.gen_q(static_cast<int>(g)) = xs[k](part.regions[k].map.qg(local));
    }
    for (size_t c = 0; c < net.converters.size(); ++c) {
      const std::string& r = net.bus(net.converters[c].ac_bus).region;
      size_t k = static_cast<size_t>(part.region_index(r));
      int local = conv_cursor[r]++;
      out.conv_p(static_cast<int>(c)) = xs[k](part.regions[k].map.pc(local));
      out.conv_q(static_cast<int>(c)) = xs[k](part.regions[k].map.qc(local));
      out.conv_loss(static_cast<int>(c)) = net.converters[c].loss(
          out.conv_p(static_cast<int>(c)), out.conv_q(static_cast<int>(c)));
    }
  }

  double f = 0.0;
  for (size_t g = 0; g < net.generators.size(); ++g)
    f += net.generators[g].b_g * net.base_mva * out.gen_p(static_cast<int>(g)) +
         net.a_q * net.base_mva * net.base_mva * out.gen_q(static_cast<int>(g)) *
             out.gen_q(static_cast<int>(g));
  for (size_t c = 0; c < net.converters.size(); ++c)
    f += net.a_q * net.base_mva * net.base_mva * out.conv_q(static_cast<int>(c)) *
         out.conv_q(static_cast<int>(c));
  out.objective = f;
  out.status = NlpStatus::Converged;
  return out;
}

// --- stacked separable form ------------------------------------------------

struct ConsensusNlp {
  NlpProblem problem;
  std::vector<int> var_offsets;     // per region
  std::vector<int> eq_offsets;      // per region
  std::vector<int> ineq_offsets;    // per region
  int consensus_rows_start = 0;     // first consensus row in the equality block
};

// Stacks the regional problems and appends the consensus equalities; the
// result is the separable formulation solved as one NLP. Its equality
// multipliers at consensus rows are the interchange prices that make a
// split solution a fixed point of the distributed iteration.
inline ConsensusNlp assemble_consensus_nlp(const Partition& part,
                                           const std::vector<OpfAssembly>& assemblies) {
  ConsensusNlp out;
  const size_t nr = part.regions.size();
  int vars = 0, eqs = 0, ineqs = 0;
  for (size_t k = 0; k < nr; ++k) {
    out.var_offsets.push_back(vars);
    out.eq_offsets.push_back(eqs);
    out.ineq_offsets.push_back(ineqs);
    vars += assemblies[k].problem.num_vars;
    eqs += assemblies[k].problem.num_eq;
    ineqs += assemblies[k].problem.num_ineq;
  }
  out.consensus_rows_start = eqs;

  // Copies of the per-region callbacks, captured by value.
  std::vector<NlpProblem> probs;
  for (size_t k = 0; k < nr; ++k) probs.push_back(assemblies[k].problem);
  auto offsets = out;  // var/eq/ineq offsets snapshot

  struct Coupler {
    std::vector<std::pair<int, std::pair<int, double>>> entries;  // row -> (stacked var, coeff)
  };
  auto coupler = std::make_shared<Coupler>();
  for (size_t k = 0; k < nr; ++k)
    for (const LocalRow& row : part.regions[k].rows)
      coupler->entries.push_back(
          {row.global_row, {offsets.var_offsets[k] + row.var, row.coeff}});

  NlpProblem p;
  p.num_vars = vars;
  p.num_eq = eqs + part.num_rows;
  p.num_ineq = ineqs;

  auto probs_sp = std::make_shared<std::vector<NlpProblem>>(std::move(probs));
  auto off_sp = std::make_shared<ConsensusNlp>(offsets);
  const int total_eq = p.num_eq;
  const int cons_start = out.consensus_rows_start;
  const int cons_rows = part.num_rows;

  p.objective = [probs_sp, off_sp](const VectorXd& x) {
    double f = 0.0;
    for (size_t k = 0; k < probs_sp->size(); ++k)
      f += (*probs_sp)[k].objective(x.segment(off_sp->var_offsets[k], (*probs_sp)[k].num_vars));
    return f;
  };
  p.gradient = [probs_sp, off_sp](const VectorXd& x) {
    VectorXd g = VectorXd::Zero(x.size());
    for (size_t k = 0; k < probs_sp->size(); ++k)
      g.segment(off_sp->var_offsets[k], (*probs_sp)[k].num_vars) =
          (*probs_sp)[k].gradient(x.segment(off_sp->var_offsets[k], (*probs_sp)[k].num_vars));
    return g;
  };
  p.eq_constraints = [probs_sp, off_sp, coupler, total_eq, cons_start](const VectorXd& x) {
    VectorXd r = VectorXd::Zero(total_eq);
    for (size_t k = 0; k < probs_sp->size(); ++k)
      if ((*probs_sp)[k].num_eq > 0)
        r.segment(off_sp->eq_offsets[k], (*probs_sp)[k].num_eq) = (*probs_sp)[k].eq_constraints(
            x.segment(off_sp->var_offsets[k], (*probs_sp)[k].num_vars));
    for (const auto& e : coupler->entries) r(cons_start + e.first) += e.second.second * x(e.second.first);
    return r;
  };
  p.eq_jacobian = [probs_sp, off_sp, coupler, total_eq, cons_start](const VectorXd& x) {
    std::vector<Eigen::Triplet<double>> t;
    for (size_t k = 0; k < probs_sp->size(); ++k) {
      if ((*probs_sp)[k].num_eq == 0) continue;
      SparseReal j = (*probs_sp)[k].eq_jacobian(
          x.segment(off_sp->var_offsets[k], (*probs_sp)[k].num_vars));
      for (int c = 0; c < j.outerSize(); ++c)
        for (SparseReal::InnerIterator it(j, c); it; ++it)
          t.emplace_back(off_sp->eq_offsets[k] + static_cast<int>(it.row()),
                         off_sp->var_offsets[k] + static_cast<int>(it.col()), it.value());
    }
    for (const auto& e : coupler->entries)
      t.emplace_back(cons_start + e.first, e.second.first, e.second.second);
    SparseReal j(total_eq, static_cast<int>(x.size()));
    j.setFromTriplets(t.begin(), t.end());
    return j;
  };
  if (ineqs > 0) {
    const int total_ineq = ineqs;
    p.ineq_constraints = [probs_sp, off_sp, total_ineq](const VectorXd& x) {
      VectorXd r = VectorXd::Zero(total_ineq);
      for (size_t k = 0; k < probs_sp->size(); ++k)
        if ((*probs_sp)[k].num_ineq > 0)
          r.segment(off_sp->ineq_offsets[k], (*probs_sp)[k].num_ineq) =
              (*probs_sp)[k].ineq_constraints(
                  x.segment(off_sp->var_offsets[k], (*probs_sp)[k].num_vars));
      return r;
    };
    p.ineq_jacobian = [probs_sp, off_sp, total_ineq](const VectorXd& x) {
      std::vector<Eigen::Triplet<double>> t;
      for (size_t k = 0; k < probs_sp->size(); ++k) {
        if ((*probs_sp)[k].num_ineq == 0) continue;
        SparseReal j = (*probs_sp)[k].ineq_jacobian(
            x.segment(off_sp->var_offsets[k], (*probs_sp)[k].num_vars));
        for (int c = 0; c < j.outerSize(); ++c)
          for (SparseReal::InnerIterator it(j, c); it; ++it)
            t.emplace_back(off_sp->ineq_offsets[k] + static_cast<int>(it.row()),
                           off_sp->var_offsets[k] + static_cast<int>(it.col()), it.value());
      }
      SparseReal j(total_ineq, static_cast<int>(x.size()));
      j.setFromTriplets(t.begin(), t.end());
      return j;
    };
  }
  p.lagrangian_hessian = [probs_sp, off_sp](const VectorXd& x, double sf, const VectorXd& ye,
                                            const VectorXd& yi) {
    std::vector<Eigen::Triplet<double>> t;
    for (size_t k = 0; k < probs_sp->size(); ++k) {
      const NlpProblem& pk = (*probs_sp)[k];
      SparseReal h = pk.lagrangian_hessian(
          x.segment(off_sp->var_offsets[k], pk.num_vars), sf,
          ye.segment(off_sp->eq_offsets[k], pk.num_eq),
          pk.num_ineq > 0 ? VectorXd(yi.segment(off_sp->ineq_offsets[k], pk.num_ineq))
                          : VectorXd());
      for (int c = 0; c < h.outerSize(); ++c)
        for (SparseReal::InnerIterator it(h, c); it; ++it)
          t.emplace_back(off_sp->var_offsets[k] + static_cast<int>(it.row()),
                         off_sp->var_offsets[k] + static_cast<int>(it.col()), it.value());
    }
    SparseReal h(static_cast<int>(x.size()), static_cast<int>(x.size()));
    h.setFromTriplets(t.begin(), t.end());
    return h;
  };

  p.lower = VectorXd::Constant(vars, -kInf);
  p.upper = VectorXd::Constant(vars, kInf);
  p.x0 = VectorXd::Zero(vars);
  for (size_t k = 0; k < nr; ++k) {
    p.lower.segment(out.var_offsets[k], (*probs_sp)[k].num_vars) = (*probs_sp)[k].lower;
    p.upper.segment(out.var_offsets[k], (*probs_sp)[k].num_vars) = (*probs_sp)[k].upper;
    p.x0.segment(out.var_offsets[k], (*probs_sp)[k].num_vars) = (*probs_sp)[k].x0;
  }

  out.problem = std::move(p);
  return out;
}

// --- reporting -------------------------------------------------------------

inline nlohmann::json partition_report(const Partition& part) {
  nlohmann::json j;
  j["regions"] = nlohmann::json::array();
  for (const RegionalProblem& rp : part.regions) {
    int aux_buses = 0;
    for (const Bus& b : rp.subnet.buses) aux_buses += b.is_auxiliary ? 1 : 0;
    j["regions"].push_back({{"name", rp.region},
                            {"buses", rp.subnet.buses.size()},
                            {"auxiliary_buses", aux_buses},
                            {"branches", rp.subnet.branches.size()},
                            {"generators", rp.subnet.generators.size()},
                            {"converters", rp.subnet.converters.size()},
                            {"coupling_rows", rp.rows.size()}});
  }
  int ac_ties = 0, dc_ties = 0;
  nlohmann::json ties = nlohmann::json::array();
  for (const TieCut& c : part.cuts) {
    (c.kind == BusKind::AC ? ac_ties : dc_ties)++;
    const Branch& br = part.original.branches[static_cast<size_t>(c.branch)];
    ties.push_back({{"from", br.from},
                    {"to", br.to},
                    {"kind", to_string(c.kind)},
                    {"regions", {c.region_a, c.region_b}},
                    {"rows", c.num_rows}});
  }
  j["ties"] = ties;
  j["ac_tie_count"] = ac_ties;
  j["dc_tie_count"] = dc_ties;
  j["consensus_dimension"] = part.num_rows;
  return j;
}

}  // namespace acdcopf
