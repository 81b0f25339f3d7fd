#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "symcon/circuit_graph.hpp"

namespace symcon {

struct PatternDevice {
  std::string name;
  DeviceKind kind = DeviceKind::Nmos;
  std::vector<std::pair<Terminal, std::string>> terminals;  // pattern net names
};

struct ParamRule {
  enum Kind { Equal, IntRatio };  // IntRatio: integer multiples of the unit device
  Kind kind = Equal;
  std::string param;
  std::vector<std::string> devices;
  std::string unit_device;  // IntRatio only
};

struct PrimitiveDef {
  std::string family;          // "dp", "mirror", "cascode", "level_shifter", or user name
  DeviceKind polarity = DeviceKind::Nmos;
  int mirror_outputs = 0;      // mirror family only
  std::vector<PatternDevice> devices;
  std::vector<std::string> ports;          // pattern nets kept on the supernode
  std::set<std::string> internal_nets;     // must be exclusive to the match
  std::set<std::string> non_supply_nets;
  std::vector<ParamRule> param_rules;
  std::vector<std::pair<std::string, std::string>> port_syms;  // symmetric port pairs
  bool common_centroid = false;

  int size() const { return (int)devices.size(); }
};

struct SupernodeMatch {
  const PrimitiveDef* def = nullptr;
  std::vector<std::string> members;                // actual device names, pattern order
  std::map<std::string, std::string> net_binding;  // pattern net -> actual net
  std::string name;                                // assigned at collapse ("CMB1", "DP1", ...)
  int position = 0;                                // min device index, for canonical naming
};

// DP, SCM/CMB (1..8 outputs) in both polarities, cascode pair, level
// shifter. User libraries loaded from JSON extend this set.
std::vector<PrimitiveDef> builtin_library();
std::vector<PrimitiveDef> load_library_json(const std::string& path);

// Maximal non-overlapping match set. Overlap resolved by larger pattern
// first, then library order, then canonical position. Assigns supernode
// names (mirrors share one SCM/CMB sequence, like the worked examples).
std::vector<SupernodeMatch> match_primitives(const CircuitGraph& g,
                                             const std::vector<PrimitiveDef>& lib);

// Replaces each match's member vertices by one supernode vertex with
// role-labeled port edges; internal-only nets disappear.
CircuitGraph collapse(const CircuitGraph& g, const std::vector<SupernodeMatch>& matches);

struct Seed {
  VertexId s1 = kNoVertex;
  VertexId s2 = kNoVertex;
  std::vector<VertexId> origins;  // pre-visited when the probe starts
};

// Candidate symmetric net pairs: declared port symmetries plus like-port
// correspondences between like primitives (e.g. SCM vs CMB). Deduplicated,
// first source wins, deterministic order.
std::vector<Seed> seed_candidates(const CircuitGraph& g);

// Test helper: enumerate all embeddings of one pattern (no overlap pruning).
std::vector<std::vector<std::string>> enumerate_embeddings(const CircuitGraph& g,
                                                           const PrimitiveDef& def);

}  // namespace symcon
