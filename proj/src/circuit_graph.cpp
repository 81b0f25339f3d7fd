#include "symcon/circuit_graph.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace symcon {

std::string EdgeLabel::to_string() const {
  if (bits == 0) return "-";
  std::string s;
  if (bits & kGate) s += 'g';
  if (bits & kSource) s += 's';
  if (bits & kDrain) s += 'd';
  return s;
}

VertexId CircuitGraph::net(const std::string& name) const {
  auto it = net_index.find(name);
  return it == net_index.end() ? kNoVertex : it->second;
}

VertexId CircuitGraph::element(const std::string& name) const {
  auto it = element_index.find(name);
  return it == element_index.end() ? kNoVertex : it->second;
}

std::string CircuitGraph::sort_key(VertexId id) const {
  const Vertex& vx = v(id);
  std::string kind;
  if (vx.klass == VClass::Net) {
    kind = "net";
  } else if (vx.comp.kind == ElementKind::Leaf) {
    kind = to_string(vx.device->kind);
  } else {
    kind = vx.comp.family;
  }
  return std::string(vx.klass == VClass::Element ? "e" : "n") + "|" + kind + "|" + vx.name;
}

void CircuitGraph::finalize() {
  for (auto& edges : adj)
    std::sort(edges.begin(), edges.end(), [this](const Edge& a, const Edge& b) {
      std::string ka = sort_key(a.to), kb = sort_key(b.to);
      if (ka != kb) return ka < kb;
      return a.port < b.port;
    });
}

bool CircuitGraph::is_bipartite() const {
  for (const auto& vx : vertices)
    for (const auto& e : adj[(size_t)vx.id])
      if (v(e.to).klass == vx.klass) return false;
  return true;
}

std::string CircuitGraph::display_name(VertexId id) const { return v(id).name; }

namespace {

void add_edge(CircuitGraph& g, VertexId elem, VertexId net, EdgeLabel label,
              PortRole role = PortRole::None, const std::string& port = "") {
  for (auto& e : g.adj[(size_t)elem]) {
    if (e.to == net) {
      e.label.bits |= label.bits;  // several terminals tied to one net
      return;
    }
  }
  g.adj[(size_t)elem].push_back({net, label, role, port});
  g.adj[(size_t)net].push_back({elem, label, role, port});
}

}  // namespace

CircuitGraph build_graph(const SubcktDef& scope, const Design& design,
                         const std::set<std::string>& supply_nets) {
  CircuitGraph g;
  g.scope = scope.name;
  std::set<std::string> ports(scope.ports.begin(), scope.ports.end());

  auto ensure_net = [&](const std::string& name) -> VertexId {
    auto it = g.net_index.find(name);
    if (it != g.net_index.end()) return it->second;
    Vertex vx;
    vx.id = (VertexId)g.vertices.size();
    vx.klass = VClass::Net;
    vx.name = name;
    vx.is_supply = supply_nets.count(name) > 0;
    vx.is_port = ports.count(name) > 0;
    g.vertices.push_back(vx);
    g.adj.emplace_back();
    g.net_index[name] = vx.id;
    return vx.id;
  };

  for (const auto& dev : scope.devices) {
    Vertex vx;
    vx.id = (VertexId)g.vertices.size();
    vx.klass = VClass::Element;
    vx.name = dev.name;
    vx.device = &dev;
    vx.comp.kind = ElementKind::Leaf;
    vx.comp.members = {dev.name};
    vx.comp.device_count = 1;
    if (dev.kind == DeviceKind::Subckt) {
      vx.comp.kind = ElementKind::Instance;
      vx.comp.family = dev.model;
      vx.comp.def = design.find(dev.model);
      vx.comp.device_count = vx.comp.def ? device_count_recursive(design, *vx.comp.def) : 0;
      if (vx.comp.def)
        for (size_t i = 0; i < dev.terminals.size(); ++i)
          vx.comp.pins.emplace_back(vx.comp.def->ports[i], dev.terminals[i].second);
    }
    g.vertices.push_back(vx);
    g.adj.emplace_back();
    g.element_index[dev.name] = vx.id;
    VertexId eid = vx.id;

    if (dev.kind == DeviceKind::Nmos || dev.kind == DeviceKind::Pmos) {
      for (const auto& [t, net] : dev.terminals) {
        if (t == Terminal::Body) continue;  // body excluded from the 3-bit label
        EdgeLabel lab;
        lab.bits = t == Terminal::Gate     ? EdgeLabel::kGate
                   : t == Terminal::Source ? EdgeLabel::kSource
                                           : EdgeLabel::kDrain;
        add_edge(g, eid, ensure_net(net), lab);
      }
    } else if (dev.kind == DeviceKind::Subckt) {
      const SubcktDef* def = design.find(dev.model);
      for (size_t i = 0; i < dev.terminals.size(); ++i) {
        std::string port = def ? def->ports[i] : "p" + std::to_string(i);
        add_edge(g, eid, ensure_net(dev.terminals[i].second), EdgeLabel{}, PortRole::Named, port);
      }
    } else {
      for (const auto& [t, net] : dev.terminals)
        add_edge(g, eid, ensure_net(net), EdgeLabel{});
    }
  }
  // Ports with no device on them still get vertices so promotions resolve.
  for (const auto& p : scope.ports) ensure_net(p);
  g.finalize();
  return g;
}

namespace {

// Rebuilds a graph from a kept subset of element vertices. Net vertices
// survive when still referenced, or when they are ports or supply rails.
CircuitGraph rebuild_without(const CircuitGraph& g, const std::set<VertexId>& dropped_elements) {
  CircuitGraph out;
  out.scope = g.scope;
  std::map<VertexId, VertexId> remap;

  for (const auto& vx : g.vertices) {
    if (vx.klass != VClass::Element || dropped_elements.count(vx.id)) continue;
    Vertex copy = vx;
    copy.id = (VertexId)out.vertices.size();
    remap[vx.id] = copy.id;
    out.vertices.push_back(copy);
    out.adj.emplace_back();
    out.element_index[copy.name] = copy.id;
  }
  for (const auto& vx : g.vertices) {
    if (vx.klass != VClass::Net) continue;
    bool referenced = vx.is_port || vx.is_supply;
    for (const auto& e : g.adj[(size_t)vx.id])
      if (remap.count(e.to)) referenced = true;
    if (!referenced) continue;
    Vertex copy = vx;
    copy.id = (VertexId)out.vertices.size();
    remap[vx.id] = copy.id;
    out.vertices.push_back(copy);
    out.adj.emplace_back();
    out.net_index[copy.name] = copy.id;
  }
  for (const auto& vx : g.vertices) {
    if (vx.klass != VClass::Element || !remap.count(vx.id)) continue;
    for (const auto& e : g.adj[(size_t)vx.id]) {
      Edge ne = e;
      ne.to = remap.at(e.to);
      out.adj[(size_t)remap.at(vx.id)].push_back(ne);
      Edge back = ne;
      back.to = remap.at(vx.id);
      out.adj[(size_t)remap.at(e.to)].push_back(back);
    }
  }
  out.finalize();
  return out;
}

}  // namespace

CircuitGraph remove_inert_dummies(const CircuitGraph& g) {
  std::set<VertexId> drop;
  for (const auto& vx : g.vertices) {
    if (vx.klass != VClass::Element || vx.comp.kind != ElementKind::Leaf) continue;
    const Device* dev = vx.device;
    if (!dev || (dev->kind != DeviceKind::Nmos && dev->kind != DeviceKind::Pmos)) continue;
    bool all_supply = true;
    for (const auto& [t, net] : dev->terminals) {
      if (t == Terminal::Body) continue;
      VertexId nid = g.net(net);
      if (nid == kNoVertex || !g.v(nid).is_supply) all_supply = false;
    }
    if (all_supply) drop.insert(vx.id);
  }
  if (drop.empty()) return g;
  return rebuild_without(g, drop);
}

const Edge* edge_between(const CircuitGraph& g, VertexId element, VertexId net) {
  for (const auto& e : g.adj[(size_t)element])
    if (e.to == net) return &e;
  return nullptr;
}

std::vector<std::pair<VertexId, const Edge*>> neighbors(const CircuitGraph& g, VertexId v,
                                                        const VisitedSet& visited) {
  std::vector<std::pair<VertexId, const Edge*>> out;
  bool v_is_net = g.v(v).klass == VClass::Net;
  for (const auto& e : g.adj[(size_t)v]) {
    const Vertex& t = g.v(e.to);
    if (visited[(size_t)e.to]) continue;
    if (t.klass == VClass::Net && t.is_supply) continue;
    const Edge* rec = v_is_net ? edge_between(g, e.to, v) : &e;
    out.emplace_back(e.to, rec);
  }
  return out;  // adj is already in canonical order
}

std::string dump_graph_json(const CircuitGraph& g) {
  std::ostringstream out;
  out << "{\n  \"scope\": \"" << g.scope << "\",\n  \"vertices\": [\n";
  for (size_t i = 0; i < g.vertices.size(); ++i) {
    const Vertex& vx = g.vertices[i];
    out << "    {\"id\": " << vx.id << ", \"class\": \""
        << (vx.klass == VClass::Element ? "element" : "net") << "\", \"name\": \"" << vx.name
        << "\"";
    if (vx.klass == VClass::Element) {
      out << ", \"kind\": \"";
      if (vx.comp.kind == ElementKind::Leaf)
        out << to_string(vx.device->kind);
      else
        out << vx.comp.family;
      out << "\"";
    } else {
      if (vx.is_supply) out << ", \"supply\": true";
      if (vx.is_port) out << ", \"port\": true";
    }
    out << "}" << (i + 1 < g.vertices.size() ? "," : "") << "\n";
  }
  out << "  ],\n  \"edges\": [\n";
  std::vector<std::string> lines;
  for (const auto& vx : g.vertices) {
    if (vx.klass != VClass::Element) continue;
    for (const auto& e : g.adj[(size_t)vx.id]) {
      std::ostringstream ln;
      ln << "    {\"element\": \"" << vx.name << "\", \"net\": \"" << g.v(e.to).name
         << "\", \"label\": \"" << e.label.to_string() << "\"";
      if (!e.port.empty()) ln << ", \"port\": \"" << e.port << "\"";
      ln << "}";
      lines.push_back(ln.str());
    }
  }
  std::sort(lines.begin(), lines.end());
  for (size_t i = 0; i < lines.size(); ++i)
    out << lines[i] << (i + 1 < lines.size() ? "," : "") << "\n";
  out << "  ]\n}\n";
  return out.str();
}

uint64_t graph_hash(const CircuitGraph& g) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  mix(dump_graph_json(g));
  return h;
}

}  // namespace symcon
