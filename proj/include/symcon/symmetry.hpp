#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "symcon/circuit_graph.hpp"
#include "symcon/constraints.hpp"
#include "symcon/ged_exact.hpp"
#include "symcon/primitive.hpp"

namespace symcon {

struct GedModel;
struct EmbedCache;

// Per-subckt facts passed up the hierarchy: symmetric port pairs usable by
// instances of this subckt at the parent level.
struct AnalysisSummary {
  std::string subckt;
  std::vector<std::pair<std::string, std::string>> promoted_sym_ports;
  int device_count = 0;

  bool ports_symmetric(const std::string& a, const std::string& b) const;
  const std::string* partner_of(const std::string& p) const;
};

enum class ApproxMode { Off, Gnn, Exact };

struct SymmetryOptions {
  ApproxMode approx = ApproxMode::Off;
  double bound = 0.75;  // minimum similarity score for an approximate match
  SimilarityBins bins = SimilarityBins::defaults();
  const GedModel* model = nullptr;  // approx == Gnn
  EmbedCache* cache = nullptr;      // optional, approx == Gnn
  long ged_budget = 2'000'000;      // node budget per exact-GED decision
  int min_composite_devices = 4;    // approx only for blocks at least this big
  int threads = 1;
  std::vector<std::string> supply_overrides;
  std::vector<PrimitiveDef> library;  // empty -> builtin
};

struct MatchOutcome {
  bool matched = false;
  bool self = false;        // matched a block with itself across the axis
  std::string kind = "exact";
  double score = 1.0;
};

// Shared state for pair matching within one scope.
struct MatchContext {
  const Design* design = nullptr;
  const SymmetryOptions* opts = nullptr;
  const std::map<std::string, AnalysisSummary>* summaries = nullptr;
  std::set<std::string> supply;
  // similarity cache keyed by (block id, block id)
  std::map<std::pair<std::string, std::string>, double> sim_cache;
  std::map<std::string, CircuitGraph> def_graphs;  // raw graphs per subckt

  const CircuitGraph& def_graph(const std::string& subckt);
};

// MatchPair of the worked examples: exact for leaves (kind, parameters and
// edge labels toward the probe nets), family/port based for supernodes and
// same-def instances, GED-backed approximate matching for composite blocks.
MatchOutcome match_pair(const CircuitGraph& g, VertexId n1, const Edge* e1, VertexId n2,
                        const Edge* e2, MatchContext& ctx);

struct ScopeAnalysis {
  ConstraintSet constraints;
  AnalysisSummary summary;
  CircuitGraph uncollapsed;  // after dummy removal
  CircuitGraph graph;        // after primitive collapse
  std::vector<SupernodeMatch> matches;
  std::vector<Seed> seeds;
};

ScopeAnalysis analyze_scope(const Design& design, const SubcktDef& def,
                            const std::map<std::string, AnalysisSummary>& summaries,
                            const std::set<std::string>& supply, const SymmetryOptions& opts);

// Bottom-up over the subckt hierarchy: build graph, drop inert dummies,
// collapse primitives, probe every candidate pair, merge and canonicalize.
ConstraintSet run_detection(const Design& design, const SymmetryOptions& opts);

}  // namespace symcon
