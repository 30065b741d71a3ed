#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "acdcopf/case_format.hpp"
#include "acdcopf/ipm.hpp"
#include "acdcopf/partition.hpp"

using namespace acdcopf;
using Catch::Approx;

namespace {

Network load_case(const std::string& name) {
  std::ifstream in(std::string(ACDCOPF_CASES_DIR) + "/" + name);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

OpfSolution central_solution(const Network& net) {
  OpfAssembly a = assemble_opf(net);
  NlpSolution s = solve_nlp(a.problem);
  REQUIRE(s.status == NlpStatus::Converged);
  return solution_from_nlp(a, s);
}

}  // namespace

TEST_CASE("one AC tie yields four consensus rows and mirrored auxiliaries") {
  Network net = load_case("case5_tworegion.case");
  Partition part = partition_network(net);

  REQUIRE(part.cuts.size() == 1);
  CHECK(part.num_rows == 4);
  const TieCut& cut = part.cuts[0];
  CHECK(cut.kind == BusKind::AC);
  CHECK(cut.region_a == "west");
  CHECK(cut.region_b == "east");

  for (const RegionalProblem& rp : part.regions) {
    int aux_buses = 0, aux_gens = 0;
    for (const Bus& b : rp.subnet.buses) aux_buses += b.is_auxiliary;
    for (const Generator& g : rp.subnet.generators) aux_gens += g.is_auxiliary;
    CHECK(aux_buses == 1);
    CHECK(aux_gens == 1);
    CHECK(rp.rows.size() == 4);
  }

  // The halves carry half the original series impedance each.
  const Branch& orig = net.branches[static_cast<size_t>(cut.branch)];
  for (const RegionalProblem& rp : part.regions) {
    const Branch& half = rp.subnet.branches.back();
    CHECK(half.r == orig.r / 2.0);
    CHECK(half.x == orig.x / 2.0);
    CHECK(half.b_charge == 0.0);
  }
  // Charging moved onto the surviving endpoints.
  const RegionalProblem& west = part.regions[static_cast<size_t>(part.region_index("west"))];
  CHECK(west.subnet.bus(3).b_shunt == orig.b_charge / 2.0);
  const RegionalProblem& east = part.regions[static_cast<size_t>(part.region_index("east"))];
  CHECK(east.subnet.bus(4).b_shunt == orig.b_charge / 2.0);
}

TEST_CASE("one DC tie yields two consensus rows") {
  Network net = load_case("case_acdc.case");
  Partition part = partition_network(net);
  REQUIRE(part.cuts.size() == 1);
  CHECK(part.cuts[0].kind == BusKind::DC);
  CHECK(part.num_rows == 2);
  CHECK(part.row_meta[0].kind == RowKind::DcV);
  CHECK(part.row_meta[1].kind == RowKind::DcPgen);
  // The DC auxiliary generators have no reactive capability.
  for (const RegionalProblem& rp : part.regions)
    for (const Generator& g : rp.subnet.generators)
      if (g.is_auxiliary) {
        CHECK(g.q_min == 0.0);
        CHECK(g.q_max == 0.0);
        CHECK(g.b_g == 0.0);
      }
}

TEST_CASE("single-region network partitions to the centralized scope") {
  Network net = load_case("case9.case");
  Partition part = partition_network(net);
  REQUIRE(part.regions.size() == 1);
  CHECK(part.num_rows == 0);
  CHECK(part.cuts.empty());
  const Network& sn = part.regions[0].subnet;
  CHECK(sn.buses.size() == net.buses.size());
  CHECK(sn.branches.size() == net.branches.size());
  CHECK(sn.generators.size() == net.generators.size());
}

TEST_CASE("partition input validation") {
  SECTION("untagged bus") {
    Network net = load_case("case9.case");
    net.buses[3].region = "";
    CHECK_THROWS_AS(partition_network(net), PartitionError);
  }
  SECTION("region with no buses, via the declared list") {
    Network net = load_case("case5_tworegion.case");
    CHECK_THROWS_AS(partition_network(net, std::vector<std::string>{"west", "east", "ghost"}),
                    PartitionError);
  }
  SECTION("stale tie flag on a hand-built network") {
    Network net = load_case("case5_tworegion.case");
    net.validate();
    net.branches[0].is_tie = true;  // 1-2 is internal to west
    CHECK_THROWS_AS(partition_network(net), PartitionError);
  }
  SECTION("converter spanning two regions") {
    Network net = load_case("case_acdc.case");
    for (Bus& b : net.buses)
      if (b.id == 101) b.region = "right";  // converter 2-101 now crosses
    net.validate();
    CHECK_THROWS_AS(partition_network(net), PartitionError);
  }
}

TEST_CASE("every consensus row has exactly two +-1 entries") {
  for (const char* name : {"case5_tworegion.case", "case15_threeregion.case", "case_acdc.case"}) {
    Network net = load_case(name);
    Partition part = partition_network(net);
    std::vector<int> count(static_cast<size_t>(part.num_rows), 0);
    for (const RegionalProblem& rp : part.regions)
      for (const LocalRow& row : rp.rows) {
        CHECK((row.coeff == 1.0 || row.coeff == -1.0));
        if (is_voltage_row(row.kind))
          CHECK(row.coeff == (row.side == 0 ? 1.0 : -1.0));
        else
          CHECK(row.coeff == 1.0);
        count[static_cast<size_t>(row.global_row)]++;
      }
    for (int c : count) CHECK(c == 2);
  }
}

TEST_CASE("stacked halves recompose the original graph") {
  Network net = load_case("case15_threeregion.case");
  Partition part = partition_network(net);
  size_t buses = 0, branches = 0;
  for (const RegionalProblem& rp : part.regions) {
    buses += rp.subnet.buses.size();
    branches += rp.subnet.branches.size();
  }
  CHECK(buses == net.buses.size() + 2 * part.cuts.size());
  CHECK(branches == net.branches.size() + part.cuts.size());
  // Contracting each auxiliary pair restores each tie's series impedance.
  for (const TieCut& cut : part.cuts) {
    const Branch& orig = net.branches[static_cast<size_t>(cut.branch)];
    double r = 0.0, x = 0.0;
    for (const RegionalProblem& rp : part.regions)
      for (const Branch& br : rp.subnet.branches)
        if (br.from == cut.aux_bus_a || br.to == cut.aux_bus_a || br.from == cut.aux_bus_b ||
            br.to == cut.aux_bus_b) {
          r += br.r;
          x += br.x;
        }
    CHECK(r == Approx(orig.r).margin(1e-15));
    CHECK(x == Approx(orig.x).margin(1e-15));
  }
}

TEST_CASE("splitting a centralized solution is exactly at consensus") {
  for (const char* name : {"case5_tworegion.case", "case15_threeregion.case", "case_acdc.case"}) {
    Network net = load_case(name);
    OpfSolution central = central_solution(net);
    Partition part = partition_network(net);
    std::vector<VectorXd> xs = split_solution(part, central);
    VectorXd resid = consensus_residual(part, xs);
    INFO(name);
    CHECK(resid.lpNorm<Eigen::Infinity>() == 0.0);  // exact by construction
  }
}

TEST_CASE("reconstruct restores a split centralized solution") {
  Network net = load_case("case5_tworegion.case");
  OpfSolution central = central_solution(net);
  Partition part = partition_network(net);
  std::vector<VectorXd> xs = split_solution(part, central);

  OpfSolution merged = reconstruct(part, xs, 1e-9);
  for (int i = 0; i < merged.bus_v.size(); ++i) {
    CHECK(merged.bus_v(i) == central.bus_v(i));
    CHECK(merged.bus_va(i) == central.bus_va(i));
  }
  for (int g = 0; g < merged.gen_p.size(); ++g) CHECK(merged.gen_p(g) == central.gen_p(g));

  BalanceResiduals res = evaluate_balance(net, merged);
  CHECK(res.max_abs() <= 1e-6);
}

TEST_CASE("reconstruct refuses to merge above tolerance and names the row") {
  Network net = load_case("case5_tworegion.case");
  OpfSolution central = central_solution(net);
  Partition part = partition_network(net);
  std::vector<VectorXd> xs = split_solution(part, central);

  // Poison the west copy of the midpoint magnitude by 10x the tolerance.
  const double eps = 1e-3;
  const RegionalProblem& west = part.regions[static_cast<size_t>(part.region_index("west"))];
  for (const LocalRow& row : west.rows)
    if (row.kind == RowKind::AcVmag)
      xs[static_cast<size_t>(part.region_index("west"))](row.var) += 10.0 * eps;

  try {
    reconstruct(part, xs, eps);
    FAIL("expected MergeError");
  } catch (const MergeError& e) {
    REQUIRE(e.violations.size() == 1);
    CHECK(e.violations[0].kind == RowKind::AcVmag);
    CHECK(e.violations[0].tie == 0);
    CHECK(std::abs(e.violations[0].value) == Approx(10.0 * eps).epsilon(1e-9));
  }
}

TEST_CASE("stacked separable form reproduces the centralized objective") {
  Network net = load_case("case5_tworegion.case");
  OpfSolution central = central_solution(net);
  Partition part = partition_network(net);

  std::vector<OpfAssembly> assemblies;
  for (const RegionalProblem& rp : part.regions) assemblies.push_back(assemble_opf(rp.subnet));
  ConsensusNlp stacked = assemble_consensus_nlp(part, assemblies);

  NlpSolution s = solve_nlp(stacked.problem);
  REQUIRE(s.status == NlpStatus::Converged);
  CHECK(s.objective == Approx(central.objective).epsilon(1e-5));
}

TEST_CASE("partition report carries the tie inventory") {
  Network net = load_case("case15_threeregion.case");
  Partition part = partition_network(net);
  nlohmann::json rep = partition_report(part);
  CHECK(rep["ac_tie_count"] == 3);
  CHECK(rep["dc_tie_count"] == 0);
  CHECK(rep["consensus_dimension"] == 12);
  CHECK(rep["regions"].size() == 3);
}
