#include "doctest.h"
#include "symcon/dataset.hpp"
#include "symcon/ged_exact.hpp"
#include "symcon/netlist.hpp"

#include <fstream>
#include <map>
#include <sstream>

using namespace symcon;

namespace {

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(SYMCON_FIXTURES) + "/" + name);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Held {
  Design design;
  CircuitGraph graph;
};

Held graph_of_netlist(const std::string& text) {
  Held h;
  h.design = parse_netlist(text);
  h.graph = build_graph(h.design.top_def(), h.design, identify_supply_nets(h.design, {}));
  return h;
}

// ------------------------------------------------------------------
// Exhaustive oracle, independent of the branch-and-bound implementation.
// Enumerates every injective assignment of g1 vertices to g2 vertices or
// deletion, and computes the induced edit cost from the complete mapping.
// ------------------------------------------------------------------
struct OGraph {
  int n = 0;
  std::vector<std::string> label;
  std::vector<std::vector<int>> edge;  // -1 = none, else label bits
};

OGraph oracle_flatten(const CircuitGraph& g) {
  OGraph o;
  o.n = (int)g.size();
  o.label.resize(o.n);
  o.edge.assign(o.n, std::vector<int>(o.n, -1));
  for (int i = 0; i < o.n; ++i) {
    const Vertex& v = g.v(i);
    if (v.klass == VClass::Net)
      o.label[i] = "net";
    else if (v.comp.kind == ElementKind::Leaf)
      o.label[i] = to_string(v.device->kind);
    else if (v.comp.kind == ElementKind::Instance)
      o.label[i] = "inst";
    else
      o.label[i] = "prim:" + v.comp.family;
  }
  for (int i = 0; i < o.n; ++i)
    for (const auto& e : g.adj[(size_t)i]) o.edge[i][(size_t)e.to] = e.label.bits;
  return o;
}

int oracle_mapping_cost(const OGraph& a, const OGraph& b, const std::vector<int>& map) {
  int cost = 0;
  std::vector<char> used(b.n, 0);
  for (int v = 0; v < a.n; ++v) {
    if (map[v] < 0)
      cost += 1;
    else {
      used[(size_t)map[v]] = 1;
      if (a.label[(size_t)v] != b.label[(size_t)map[v]]) cost += 1;
    }
  }
  for (int u = 0; u < b.n; ++u)
    if (!used[(size_t)u]) cost += 1;
  for (int x = 0; x < a.n; ++x)
    for (int y = x + 1; y < a.n; ++y) {
      int ea = a.edge[(size_t)x][(size_t)y];
      int eb = (map[x] >= 0 && map[y] >= 0) ? b.edge[(size_t)map[x]][(size_t)map[y]] : -1;
      if (ea >= 0 && eb >= 0)
        cost += ea != eb ? 1 : 0;
      else if (ea >= 0)
        cost += 1;
    }
  for (int x = 0; x < b.n; ++x)
    for (int y = x + 1; y < b.n; ++y) {
      if (b.edge[(size_t)x][(size_t)y] < 0) continue;
      int rx = -1, ry = -1;
      for (int v = 0; v < a.n; ++v) {
        if (map[v] == x) rx = v;
        if (map[v] == y) ry = v;
      }
      bool covered = rx >= 0 && ry >= 0 && a.edge[(size_t)rx][(size_t)ry] >= 0;
      if (!covered) cost += 1;
    }
  return cost;
}

void oracle_enum(const OGraph& a, const OGraph& b, std::vector<int>& map,
                 std::vector<char>& used, int v, int& best) {
  if (v == a.n) {
    best = std::min(best, oracle_mapping_cost(a, b, map));
    return;
  }
  map[(size_t)v] = -1;
  oracle_enum(a, b, map, used, v + 1, best);
  for (int u = 0; u < b.n; ++u) {
    if (used[(size_t)u]) continue;
    used[(size_t)u] = 1;
    map[(size_t)v] = u;
    oracle_enum(a, b, map, used, v + 1, best);
    used[(size_t)u] = 0;
  }
  map[(size_t)v] = -1;
}

int oracle_ged(const CircuitGraph& g1, const CircuitGraph& g2) {
  OGraph a = oracle_flatten(g1);
  OGraph b = oracle_flatten(g2);
  std::vector<int> map(a.n, -1);
  std::vector<char> used(b.n, 0);
  int best = 1 << 28;
  oracle_enum(a, b, map, used, 0, best);
  return best;
}

}  // namespace

TEST_CASE("ged of a graph with itself is zero") {
  for (const char* fixture : {"cs_lna.sp", "cg_lna.sp"}) {
    CAPTURE(fixture);
    Held h = graph_of_netlist(read_fixture(fixture));
    GedOptions opts;
    opts.node_budget = 1'000'000;
    GedResult r = ged_exact(h.graph, h.graph, opts);
    CHECK(r.ged == 0);
    CHECK(r.exact);
    CHECK(normalized_dist(r.ged, h.graph, h.graph) == 0.0);
  }
}

TEST_CASE("lna pair needs exactly four edits: two deletions, two insertions") {
  Held cs = graph_of_netlist(read_fixture("cs_lna.sp"));
  Held cg = graph_of_netlist(read_fixture("cg_lna.sp"));
  GedOptions opts;
  opts.node_budget = 5'000'000;
  opts.want_path = true;
  GedResult r = ged_exact(cs.graph, cg.graph, opts);
  CHECK(r.ged == 4);
  CHECK(r.exact);
  REQUIRE(r.path.size() == 4);
  std::map<EditOp::Kind, int> kinds;
  for (const auto& op : r.path) kinds[op.kind]++;
  CHECK(kinds[EditOp::EdgeDel] == 2);
  CHECK(kinds[EditOp::EdgeIns] == 2);

  // normalized distance against sizes counted from the fixture graphs
  auto [v1, e1] = graph_size_counts(cs.graph);
  auto [v2, e2] = graph_size_counts(cg.graph);
  CHECK(v1 == 11);
  CHECK(e1 == 13);
  CHECK(v2 == 11);
  CHECK(e2 == 13);
  CHECK(normalized_dist(r.ged, cs.graph, cg.graph) == doctest::Approx(4.0 / 48.0));
}

TEST_CASE("branch and bound equals the exhaustive oracle on random pairs") {
  int checked = 0;
  for (uint64_t seed = 1; seed <= 12; ++seed) {
    FlatGraph base = random_bipartite(3, 3, seed);
    auto [pert, script] = perturb(base, (int)(seed % 4), seed * 77 + 1);
    CircuitGraph g1 = base.to_circuit_graph("a");
    CircuitGraph g2 = pert.to_circuit_graph("b");
    if (g1.size() > 6 || g2.size() > 6) continue;
    int expect = oracle_ged(g1, g2);
    GedOptions opts;
    opts.node_budget = 10'000'000;
    GedResult r = ged_exact(g1, g2, opts);
    CAPTURE(seed);
    CHECK(r.exact);
    CHECK(r.ged == expect);
    ++checked;
  }
  CHECK(checked >= 8);
}

TEST_CASE("metric properties: symmetry and triangle inequality on samples") {
  std::vector<CircuitGraph> graphs;
  for (uint64_t seed = 3; seed <= 5; ++seed)
    graphs.push_back(random_bipartite(3, 2, seed).to_circuit_graph("g" + std::to_string(seed)));
  GedOptions opts;
  opts.node_budget = 10'000'000;
  auto d = [&](int i, int j) { return ged_exact(graphs[(size_t)i], graphs[(size_t)j], opts).ged; };
  for (int i = 0; i < 3; ++i) CHECK(d(i, i) == 0);
  CHECK(d(0, 1) == d(1, 0));
  CHECK(d(0, 2) == d(2, 0));
  CHECK(d(0, 2) <= d(0, 1) + d(1, 2));
  CHECK(d(1, 0) <= d(1, 2) + d(2, 0));
}

TEST_CASE("size limit without budget is an error") {
  FlatGraph big = random_bipartite(12, 10, 9);
  CircuitGraph g = big.to_circuit_graph();
  GedOptions opts;  // default limit 16 vertices, no budget
  CHECK_THROWS(ged_exact(g, g, opts));
  opts.node_budget = 100000;
  CHECK(ged_exact(g, g, opts).ged == 0);
}

TEST_CASE("ged_within decision matches the full computation") {
  FlatGraph base = random_bipartite(4, 3, 21);
  auto [pert, script] = perturb(base, 2, 99);
  CircuitGraph g1 = base.to_circuit_graph("a");
  CircuitGraph g2 = pert.to_circuit_graph("b");
  GedOptions opts;
  opts.node_budget = 10'000'000;
  int exact = ged_exact(g1, g2, opts).ged;
  int found = -1;
  auto yes = ged_within(g1, g2, exact, 10'000'000, &found);
  REQUIRE(yes.has_value());
  CHECK(*yes);
  CHECK(found >= exact);
  if (exact > 0) {
    auto no = ged_within(g1, g2, exact - 1, 10'000'000);
    REQUIRE(no.has_value());
    CHECK_FALSE(*no);
  }
}

TEST_CASE("normalized_dist rejects two empty graphs") {
  CircuitGraph a, b;
  CHECK_THROWS(normalized_dist(0, a, b));
}

TEST_CASE("similarity bins: exact-match bin, tail bin, interior-edge rule") {
  SimilarityBins bins = SimilarityBins::defaults();
  REQUIRE(bins.valid());
  CHECK(bins.to_similarity(0.0) == 1.0);
  CHECK(bins.to_similarity(1.0) == 0.0);
  CHECK(bins.to_similarity(0.5) == 0.0);
  // a distance on an interior edge falls into the lower (more similar) bin
  CHECK(bins.to_similarity(0.05) == 0.75);
  CHECK(bins.to_similarity(0.051) == 0.5);
  CHECK(bins.to_similarity(0.10) == 0.5);
  CHECK(bins.to_similarity(0.2) == 0.25);
  CHECK(bins.to_similarity(0.35) == 0.0);
  // monotone nonincreasing
  double prev = 2.0;
  for (double x = 0.0; x < 0.6; x += 0.01) {
    double s = bins.to_similarity(x);
    CHECK(s <= prev + 1e-12);
    prev = s;
  }
}
