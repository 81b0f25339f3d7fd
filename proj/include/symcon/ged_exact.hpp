#pragma once

#include <optional>
#include <string>
#include <vector>

#include "symcon/circuit_graph.hpp"

namespace symcon {

struct EditOp {
  enum Kind { VertexIns, VertexDel, VertexRelabel, EdgeIns, EdgeDel, EdgeRelabel };
  Kind kind;
  std::string a;  // vertex name, or "elem|net" for edge ops
  std::string b;  // relabel target / second edge description
  bool operator<(const EditOp& o) const;
};

const char* to_string(EditOp::Kind k);

struct GedOptions {
  long node_budget = 0;   // 0 = unlimited (requires graphs within size_limit)
  int size_limit = 16;    // max vertices per graph for unbudgeted runs
  int init_upper = -1;    // known upper bound, e.g. from a perturbation script
  bool want_path = false;
};

struct GedResult {
  int ged = 0;
  bool exact = true;
  long expanded = 0;
  std::vector<EditOp> path;  // only when requested
};

// Optimal unit-cost GED over labeled bipartite circuit graphs. Vertex labels
// are (class, kind); edge labels are the 3-bit terminal mask. Net names are
// ignored. Best-first branch and bound over vertex assignments with an
// admissible label-histogram bound.
GedResult ged_exact(const CircuitGraph& g1, const CircuitGraph& g2, const GedOptions& opts = {});

// Decision variant: is GED(g1,g2) <= k? nullopt when the budget ran out
// before the question was settled. When true, *found holds the cost of the
// witnessing edit path (an upper bound on the exact GED).
std::optional<bool> ged_within(const CircuitGraph& g1, const CircuitGraph& g2, int k,
                               long node_budget = 0, int* found = nullptr);

// ged / (|G1v|+|G1e|+|G2v|+|G2e|). Throws when both graphs are empty.
double normalized_dist(int ged, const CircuitGraph& g1, const CircuitGraph& g2);

std::pair<int, int> graph_size_counts(const CircuitGraph& g);  // (vertices, edges)

// Piecewise-constant similarity over normalized distance. A distance on an
// interior edge falls into the lower (more similar) bin.
struct SimilarityBins {
  std::vector<double> edges;   // strictly increasing, starts at 0
  std::vector<double> scores;  // same length; scores[0] applies to dist == 0

  double to_similarity(double dist) const;
  bool valid() const;
  static SimilarityBins defaults();
};

}  // namespace symcon
