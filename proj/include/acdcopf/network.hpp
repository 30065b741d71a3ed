#pragma once

// Domain model for hybrid AC-DC networks: buses, branches, generators,
// AC-DC converters, plus admittance matrix assembly. All electrical
// quantities are per-unit on Network::base_mva.

#include <algorithm>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

namespace acdcopf {

using Complex = std::complex<double>;
using SparseComplex = Eigen::SparseMatrix<Complex>;
using SparseReal = Eigen::SparseMatrix<double>;

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class BusKind : std::uint8_t { AC, DC };

inline const char* to_string(BusKind k) { return k == BusKind::AC ? "AC" : "DC"; }

struct Bus {
  int id = -1;
  BusKind kind = BusKind::AC;
  double v_min = 0.9;
  double v_max = 1.1;
  bool is_ref = false;
  std::string region;
  double p_load = 0.0;  // pu
  double q_load = 0.0;  // pu, AC only
  double g_shunt = 0.0;  // pu, AC only
  double b_shunt = 0.0;  // pu, AC only
  bool is_auxiliary = false;  // created by tie-line decoupling
};

struct Branch {
  int from = -1;
  int to = -1;
  double r = 0.0;  // pu series resistance
  double x = 0.0;  // pu series reactance (AC only)
  double b_charge = 0.0;  // pu total charging susceptance (AC only)
  bool is_tie = false;  // endpoints lie in different regions

  Complex series_impedance() const { return {r, x}; }
};

struct Generator {
  int bus = -1;
  double p_min = 0.0, p_max = 0.0;  // pu
  double q_min = 0.0, q_max = 0.0;  // pu
  double b_g = 50.0;  // linear cost, currency per MWh
  bool is_auxiliary = false;  // interchange injector created by decoupling
};

struct Converter {
  int ac_bus = -1;
  int dc_bus = -1;
  double s_rated = 1.0;  // pu apparent-power limit
  double loss_c0 = -1.0;  // pu constant loss term; <0 means "use default"
  double loss_c2 = -1.0;  // 1/pu quadratic loss term; <0 means "use default"

  // Loss polynomial chosen so that losses are 1.1% of rating at zero
  // transfer and 1.85% of rating at full load.
  static double default_c0(double s_rated) { return 0.011 * s_rated; }
  static double default_c2(double s_rated) { return 0.0075 / s_rated; }

  double c0() const { return loss_c0 >= 0.0 ? loss_c0 : default_c0(s_rated); }
  double c2() const { return loss_c2 >= 0.0 ? loss_c2 : default_c2(s_rated); }

  // P_CL = c0 + c2 * S^2 with S^2 = p^2 + q^2, all pu.
  double loss(double p, double q) const { return c0() + c2() * (p * p + q * q); }
};

// Validation strictness. Parsed case files must satisfy the full set of
// invariants; regional sub-networks produced by partitioning legitimately
// lack reference buses (the consensus penalty provides the gauge).
enum class NetworkRole { Full, Regional };

struct Network {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<Converter> converters;
  double base_mva = 100.0;
  double a_q = 0.001;  // currency/h per Mvar^2, applied to Q_G and Q_C
  NetworkRole role = NetworkRole::Full;

  int bus_index(int id) const {
    auto it = bus_index_.find(id);
    if (it == bus_index_.end())
      throw ValidationError("unknown bus id " + std::to_string(id));
    return it->second;
  }
  bool has_bus(int id) const { return bus_index_.count(id) != 0; }
  const Bus& bus(int id) const { return buses[static_cast<size_t>(bus_index(id))]; }

  // Local orderings: position of each AC (DC) bus among AC (DC) buses,
  // in bus-storage order. Rows/columns of the admittance matrices and the
  // OPF variable blocks follow these orderings.
  const std::vector<int>& ac_order() const { return ac_order_; }
  const std::vector<int>& dc_order() const { return dc_order_; }
  int ac_position(int bus_idx) const { return ac_pos_[static_cast<size_t>(bus_idx)]; }
  int dc_position(int bus_idx) const { return dc_pos_[static_cast<size_t>(bus_idx)]; }
  int num_ac() const { return static_cast<int>(ac_order_.size()); }
  int num_dc() const { return static_cast<int>(dc_order_.size()); }

  double total_p_load() const {
    double s = 0.0;
    for (const Bus& b : buses) s += std::abs(b.p_load);
    return s;
  }

  // Rebuilds the id lookup and AC/DC orderings. Must be called after the
  // bus vector changes; parse/partition do this internally.
  void reindex();

  // Checks all structural invariants, throws ValidationError on the first
  // violation. Also derives Branch::is_tie from the region tags.
  void validate();

  // Connected components of the AC-branch subgraph (bus indices), and of
  // the DC-branch subgraph. Converters do not join islands.
  std::vector<std::vector<int>> ac_islands() const;
  std::vector<std::vector<int>> dc_islands() const;

 private:
  std::map<int, int> bus_index_;
  std::vector<int> ac_order_, dc_order_;
  std::vector<int> ac_pos_, dc_pos_;
};

inline void Network::reindex() {
  bus_index_.clear();
  ac_order_.clear();
  dc_order_.clear();
  ac_pos_.assign(buses.size(), -1);
  dc_pos_.assign(buses.size(), -1);
  for (size_t i = 0; i < buses.size(); ++i) {
    if (!bus_index_.emplace(buses[i].id, static_cast<int>(i)).second)
      throw ValidationError("duplicate bus id " + std::to_string(buses[i].id));
    if (buses[i].kind == BusKind::AC) {
      ac_pos_[i] = static_cast<int>(ac_order_.size());
      ac_order_.push_back(static_cast<int>(i));
    } else {
      dc_pos_[i] = static_cast<int>(dc_order_.size());
      dc_order_.push_back(static_cast<int>(i));
    }
  }
}

namespace detail {

// Union of bus-index component labels over an edge list.
inline std::vector<std::vector<int>> components(int n, const std::vector<std::pair<int, int>>& edges,
                                                const std::vector<int>& nodes) {
  std::vector<int> parent(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) parent[static_cast<size_t>(i)] = i;
  std::function<int(int)> find = [&](int a) {
    while (parent[static_cast<size_t>(a)] != a) {
      parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
      a = parent[static_cast<size_t>(a)];
    }
    return a;
  };
  for (auto [a, b] : edges) parent[static_cast<size_t>(find(a))] = find(b);
  std::map<int, std::vector<int>> groups;
  for (int v : nodes) groups[find(v)].push_back(v);
  std::vector<std::vector<int>> out;
  out.reserve(groups.size());
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

}  // namespace detail

inline std::vector<std::vector<int>> Network::ac_islands() const {
  std::vector<std::pair<int, int>> edges;
  for (const Branch& br : branches) {
    int a = bus_index(br.from), b = bus_index(br.to);
    if (buses[static_cast<size_t>(a)].kind == BusKind::AC) edges.emplace_back(a, b);
  }
  return detail::components(static_cast<int>(buses.size()), edges, ac_order_);
}

inline std::vector<std::vector<int>> Network::dc_islands() const {
  std::vector<std::pair<int, int>> edges;
  for (const Branch& br : branches) {
    int a = bus_index(br.from), b = bus_index(br.to);
    if (buses[static_cast<size_t>(a)].kind == BusKind::DC) edges.emplace_back(a, b);
  }
  return detail::components(static_cast<int>(buses.size()), edges, dc_order_);
}

inline void Network::validate() {
  reindex();
  if (base_mva <= 0.0) throw ValidationError("base_mva must be positive");
  if (a_q < 0.0) throw ValidationError("a_q must be nonnegative");

  for (const Bus& b : buses) {
    if (!(b.v_min > 0.0) || !(b.v_min <= b.v_max))
      throw ValidationError("bus " + std::to_string(b.id) + ": need 0 < vmin <= vmax");
    if (b.kind == BusKind::DC && (b.q_load != 0.0 || b.g_shunt != 0.0 || b.b_shunt != 0.0))
      throw ValidationError("bus " + std::to_string(b.id) +
                            ": DC buses carry no reactive load or shunt");
  }

  for (Branch& br : branches) {
    const Bus& f = bus(br.from);
    const Bus& t = bus(br.to);
    if (br.from == br.to)
      throw ValidationError("branch joins bus " + std::to_string(br.from) + " to itself");
    if (f.kind != t.kind)
      throw ValidationError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            " joins an AC and a DC bus; use a converter");
    if (f.kind == BusKind::DC) {
      if (br.r <= 0.0)
        throw ValidationError("DC branch " + std::to_string(br.from) + "-" +
                              std::to_string(br.to) + " needs r > 0");
      if (br.x != 0.0 || br.b_charge != 0.0)
        throw ValidationError("DC branch " + std::to_string(br.from) + "-" +
                              std::to_string(br.to) + " cannot carry reactance or charging");
    } else if (br.r * br.r + br.x * br.x <= 0.0) {
      throw ValidationError("AC branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            " has zero series impedance");
    }
    br.is_tie = f.region != t.region;
  }

  for (const Generator& g : generators) {
    const Bus& b = bus(g.bus);
    if (g.p_min > g.p_max || g.q_min > g.q_max)
      throw ValidationError("generator at bus " + std::to_string(g.bus) + ": bounds out of order");
    if (b.kind == BusKind::DC && !g.is_auxiliary)
      throw ValidationError("generator at bus " + std::to_string(g.bus) +
                            ": only auxiliary generators may sit on DC buses");
    if (b.kind == BusKind::DC && (g.q_min != 0.0 || g.q_max != 0.0))
      throw ValidationError("generator at bus " + std::to_string(g.bus) +
                            ": DC generators carry no reactive power");
  }

  for (const Converter& c : converters) {
    const Bus& a = bus(c.ac_bus);
    const Bus& d = bus(c.dc_bus);
    if (a.kind != BusKind::AC || d.kind != BusKind::DC)
      throw ValidationError("converter " + std::to_string(c.ac_bus) + "-" +
                            std::to_string(c.dc_bus) +
                            " must join one AC bus and one DC bus");
    if (!(c.s_rated > 0.0))
      throw ValidationError("converter at bus " + std::to_string(c.ac_bus) +
                            ": s_rated must be positive");
    if (c.c0() < 0.0 || c.c2() < 0.0)
      throw ValidationError("converter at bus " + std::to_string(c.ac_bus) +
                            ": loss coefficients must be nonnegative");
  }

  // Reference-bus invariants hold for full networks only; regional
  // sub-networks may have islands whose gauge comes from the consensus
  // penalty.
  if (role == NetworkRole::Full) {
    for (const auto& island : ac_islands()) {
      int refs = 0;
      for (int i : island) refs += buses[static_cast<size_t>(i)].is_ref ? 1 : 0;
      if (refs != 1)
        throw ValidationError("AC island containing bus " +
                              std::to_string(buses[static_cast<size_t>(island.front())].id) +
                              " has " + std::to_string(refs) + " reference buses, expected 1");
    }
    for (const auto& island : dc_islands()) {
      int refs = 0;
      for (int i : island) refs += buses[static_cast<size_t>(i)].is_ref ? 1 : 0;
      if (refs != 1)
        throw ValidationError("DC island containing bus " +
                              std::to_string(buses[static_cast<size_t>(island.front())].id) +
                              " has " + std::to_string(refs) + " reference buses, expected 1");
    }
    // The whole network must be one component once converters are counted
    // as edges.
    if (!buses.empty()) {
      std::vector<std::pair<int, int>> edges;
      for (const Branch& br : branches) edges.emplace_back(bus_index(br.from), bus_index(br.to));
      for (const Converter& c : converters)
        edges.emplace_back(bus_index(c.ac_bus), bus_index(c.dc_bus));
      std::vector<int> all(buses.size());
      for (size_t i = 0; i < buses.size(); ++i) all[i] = static_cast<int>(i);
      if (detail::components(static_cast<int>(buses.size()), edges, all).size() != 1)
        throw ValidationError("network is not connected (branches + converters)");
    }
  }
}

// Standard bus-admittance assembly over the AC buses, pi-model lines:
// diagonal = sum of incident series admittances + j*b/2 per incident line
// + bus shunt, off-diagonal = -series admittance.
inline SparseComplex build_ac_admittance(const Network& net) {
  const int n = net.num_ac();
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(net.branches.size() * 4 + static_cast<size_t>(n));
  for (const Branch& br : net.branches) {
    int fi = net.bus_index(br.from);
    if (net.buses[static_cast<size_t>(fi)].kind != BusKind::AC) continue;
    int ti = net.bus_index(br.to);
    int f = net.ac_position(fi), t = net.ac_position(ti);
    Complex y = 1.0 / br.series_impedance();
    Complex ysh(0.0, br.b_charge / 2.0);
    trip.emplace_back(f, f, y + ysh);
    trip.emplace_back(t, t, y + ysh);
    trip.emplace_back(f, t, -y);
    trip.emplace_back(t, f, -y);
  }
  for (int p = 0; p < n; ++p) {
    const Bus& b = net.buses[static_cast<size_t>(net.ac_order()[static_cast<size_t>(p)])];
    if (b.g_shunt != 0.0 || b.b_shunt != 0.0)
      trip.emplace_back(p, p, Complex(b.g_shunt, b.b_shunt));
  }
  SparseComplex y(n, n);
  y.setFromTriplets(trip.begin(), trip.end());
  return y;
}

// Real conductance matrix over the DC buses.
inline SparseReal build_dc_admittance(const Network& net) {
  const int n = net.num_dc();
  std::vector<Eigen::Triplet<double>> trip;
  for (const Branch& br : net.branches) {
    int fi = net.bus_index(br.from);
    if (net.buses[static_cast<size_t>(fi)].kind != BusKind::DC) continue;
    int ti = net.bus_index(br.to);
    int f = net.dc_position(fi), t = net.dc_position(ti);
    double g = 1.0 / br.r;
    trip.emplace_back(f, f, g);
    trip.emplace_back(t, t, g);
    trip.emplace_back(f, t, -g);
    trip.emplace_back(t, f, -g);
  }
  SparseReal y(n, n);
  y.setFromTriplets(trip.begin(), trip.end());
  return y;
}

}  // namespace acdcopf
