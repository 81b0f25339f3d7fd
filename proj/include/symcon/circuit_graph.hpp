#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "symcon/netlist.hpp"

namespace symcon {

using VertexId = int;
constexpr VertexId kNoVertex = -1;

enum class VClass : uint8_t { Element, Net };

// 3-bit MOS terminal mask. Passive/port edges carry a neutral (0) label.
struct EdgeLabel {
  uint8_t bits = 0;
  static constexpr uint8_t kGate = 1;
  static constexpr uint8_t kSource = 2;
  static constexpr uint8_t kDrain = 4;

  bool operator==(const EdgeLabel&) const = default;
  std::string to_string() const;
};

// Port roles on collapsed supernodes and instances.
enum class PortRole : uint8_t {
  None = 0,
  MirrorRef,
  MirrorOut,
  MirrorSrc,
  DpOut,
  DpGate,
  DpSrc,
  Named,  // generic primitives and subckt instances: match by port name
};

struct Edge {
  VertexId to = kNoVertex;
  EdgeLabel label;
  PortRole role = PortRole::None;
  std::string port;  // port name for composite vertices (net name for primitives)
};

// What an ELEMENT vertex stands for once primitives are collapsed or
// hierarchy is kept opaque.
enum class ElementKind : uint8_t { Leaf, Primitive, Instance };

struct AnalysisSummary;  // per-subckt results, produced by the symmetry engine

struct CompositeInfo {
  ElementKind kind = ElementKind::Leaf;
  std::string family;     // "dp", "mirror", ... for primitives; def name for instances
  DeviceKind polarity = DeviceKind::Nmos;
  int device_count = 0;   // leaf devices inside, recursive for instances
  std::vector<std::string> members;  // leaf: own name; primitive: member device names
  // Mirror structure: out ports with their device width ratio to the unit.
  std::string ref_net, src_net;
  std::vector<std::pair<std::string, double>> out_nets;  // (net, w)
  // DP structure: per side (drain net, gate net); shared source net.
  std::array<std::pair<std::string, std::string>, 2> dp_sides;
  double unit_w = 0, unit_l = 0;
  const SubcktDef* def = nullptr;             // instances
  const AnalysisSummary* summary = nullptr;   // instances, may be null
  std::vector<std::pair<std::string, std::string>> sym_port_pairs;  // generic primitives
  std::vector<std::pair<std::string, std::string>> pins;            // port -> net
};

struct Vertex {
  VertexId id = kNoVertex;
  VClass klass = VClass::Net;
  std::string name;
  // Element payload
  const Device* device = nullptr;  // leaves
  CompositeInfo comp;
  // Net payload
  bool is_supply = false;
  bool is_port = false;
};

using VisitedSet = std::vector<uint8_t>;

struct CircuitGraph {
  std::vector<Vertex> vertices;
  std::vector<std::vector<Edge>> adj;  // sorted by canonical key of target
  std::map<std::string, VertexId> net_index;
  std::map<std::string, VertexId> element_index;
  std::string scope;  // subckt name this graph was built from
  // Devices for synthetic graphs with no backing Design (deque for stable
  // addresses; shared so copies of the graph stay valid).
  std::shared_ptr<std::deque<Device>> owned_devices;

  const Vertex& v(VertexId id) const { return vertices[(size_t)id]; }
  size_t size() const { return vertices.size(); }
  VertexId net(const std::string& name) const;
  VertexId element(const std::string& name) const;
  VisitedSet fresh_marks() const { return VisitedSet(vertices.size(), 0); }

  // Canonical neighbor order key: (klass, kind, name).
  std::string sort_key(VertexId id) const;
  void finalize();  // sorts adjacency lists, must be called after edits
  bool is_bipartite() const;
  std::string display_name(VertexId id) const;  // "CMB1/out1" style via-edge names live elsewhere
};

// One ELEMENT vertex per device/instance, one NET vertex per distinct net.
// MOS body terminals contribute no edges. Ties of several terminals to one
// net collapse into a single edge with the union of label bits.
CircuitGraph build_graph(const SubcktDef& scope, const Design& design,
                         const std::set<std::string>& supply_nets);

// Deletes every MOS whose g, s and d nets are all supply-flagged. Idempotent.
CircuitGraph remove_inert_dummies(const CircuitGraph& g);

// Unvisited, non-supply adjacent vertices in canonical order. The returned
// edge pointers are the element-side records (edge->to is the net).
std::vector<std::pair<VertexId, const Edge*>> neighbors(const CircuitGraph& g, VertexId v,
                                                        const VisitedSet& visited);

// Element-side edge record between an element and a net, if any.
const Edge* edge_between(const CircuitGraph& g, VertexId element, VertexId net);

// Stable text/JSON adjacency dump for diagnostics.
std::string dump_graph_json(const CircuitGraph& g);

// FNV-1a over the canonical serialization; used for embedding cache keys.
uint64_t graph_hash(const CircuitGraph& g);

}  // namespace symcon
