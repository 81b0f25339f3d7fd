#include "symcon/primitive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "json.hpp"

namespace symcon {

namespace {

bool close_rel(double a, double b, double tol = 1e-9) {
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

bool is_integer_ratio(double value, double unit) {
  if (unit <= 0) return false;
  double r = value / unit;
  double k = std::round(r);
  return k >= 1 && k <= 64 && close_rel(r, k);
}

PatternDevice mos(const std::string& name, DeviceKind kind, const std::string& d,
                  const std::string& g, const std::string& s) {
  return {name, kind, {{Terminal::Drain, d}, {Terminal::Gate, g}, {Terminal::Source, s}}};
}

PrimitiveDef make_dp(DeviceKind kind) {
  PrimitiveDef def;
  def.family = "dp";
  def.polarity = kind;
  def.devices = {mos("m_a", kind, "da", "ga", "s"), mos("m_b", kind, "db", "gb", "s")};
  def.ports = {"da", "db", "ga", "gb", "s"};
  def.non_supply_nets = {"da", "db", "ga", "gb", "s"};
  def.param_rules = {{ParamRule::Equal, "w", {"m_a", "m_b"}, ""},
                     {ParamRule::Equal, "l", {"m_a", "m_b"}, ""}};
  def.port_syms = {{"da", "db"}};
  return def;
}

PrimitiveDef make_mirror(DeviceKind kind, int outputs) {
  PrimitiveDef def;
  def.family = "mirror";
  def.polarity = kind;
  def.mirror_outputs = outputs;
  def.devices.push_back(mos("m_ref", kind, "ref", "ref", "src"));
  def.ports = {"ref", "src"};
  std::vector<std::string> all = {"m_ref"};
  for (int i = 0; i < outputs; ++i) {
    std::string out = "out" + std::to_string(i);
    std::string dev = "m_out" + std::to_string(i);
    def.devices.push_back(mos(dev, kind, out, "ref", "src"));
    def.ports.push_back(out);
    def.non_supply_nets.insert(out);
    all.push_back(dev);
  }
  def.non_supply_nets.insert("ref");
  def.param_rules = {{ParamRule::Equal, "l", all, ""},
                     {ParamRule::IntRatio, "w", all, "m_ref"}};
  def.common_centroid = outputs >= 2;
  return def;
}

PrimitiveDef make_cascode(DeviceKind kind) {
  PrimitiveDef def;
  def.family = "cascode";
  def.polarity = kind;
  def.devices = {mos("m_top", kind, "out", "bias", "mid"), mos("m_bot", kind, "mid", "in", "src")};
  def.ports = {"out", "bias", "in", "src"};
  def.internal_nets = {"mid"};
  def.non_supply_nets = {"out", "mid"};
  def.param_rules = {{ParamRule::Equal, "l", {"m_top", "m_bot"}, ""}};
  return def;
}

PrimitiveDef make_level_shifter(DeviceKind kind) {
  PrimitiveDef def;
  def.family = "level_shifter";
  def.polarity = kind;
  def.devices = {mos("m_sf", kind, "drn", "in", "out"), mos("m_bias", kind, "out", "bias", "src")};
  def.ports = {"drn", "in", "out", "bias", "src"};
  def.non_supply_nets = {"in", "out"};
  def.param_rules = {{ParamRule::Equal, "l", {"m_sf", "m_bias"}, ""}};
  return def;
}

DeviceKind kind_from_string(const std::string& s) {
  if (s == "nmos") return DeviceKind::Nmos;
  if (s == "pmos") return DeviceKind::Pmos;
  if (s == "res") return DeviceKind::Res;
  if (s == "cap") return DeviceKind::Cap;
  if (s == "ind") return DeviceKind::Ind;
  throw std::runtime_error("primitive library: unknown device kind '" + s + "'");
}

struct Embedding {
  std::vector<VertexId> devices;                   // pattern order
  std::map<std::string, std::string> net_binding;  // pattern net -> actual net
  int position = 0;
};

struct PatternMatcher {
  const CircuitGraph& g;
  const PrimitiveDef& def;
  std::vector<VertexId> assignment;
  std::map<std::string, VertexId> bound;  // pattern net -> actual net vertex
  std::map<VertexId, std::string> bound_rev;
  std::set<VertexId> used;
  std::vector<Embedding> found;

  PatternMatcher(const CircuitGraph& g, const PrimitiveDef& def) : g(g), def(def) {}

  bool bind_net(const std::string& pnet, VertexId actual,
                std::vector<std::string>& added) {
    auto it = bound.find(pnet);
    if (it != bound.end()) return it->second == actual;
    auto rit = bound_rev.find(actual);
    if (rit != bound_rev.end()) return false;  // injective
    if (def.non_supply_nets.count(pnet) && g.v(actual).is_supply) return false;
    bound[pnet] = actual;
    bound_rev[actual] = pnet;
    added.push_back(pnet);
    return true;
  }

  void unbind(const std::vector<std::string>& added) {
    for (const auto& pnet : added) {
      bound_rev.erase(bound.at(pnet));
      bound.erase(pnet);
    }
  }

  bool device_fits(const PatternDevice& pd, VertexId vid, std::vector<std::string>& added) {
    const Vertex& vx = g.v(vid);
    if (vx.klass != VClass::Element || vx.comp.kind != ElementKind::Leaf) return false;
    if (vx.device->kind != pd.kind) return false;
    for (const auto& [t, pnet] : pd.terminals) {
      const std::string* net = vx.device->net_of(t);
      if (!net) return false;
      VertexId nid = g.net(*net);
      if (nid == kNoVertex) return false;
      if (!bind_net(pnet, nid, added)) return false;
    }
    return true;
  }

  bool params_ok() const {
    auto dev = [&](const std::string& pname) -> const Device* {
      for (size_t i = 0; i < def.devices.size(); ++i)
        if (def.devices[i].name == pname) return g.v(assignment[i]).device;
      return nullptr;
    };
    for (const auto& rule : def.param_rules) {
      if (rule.kind == ParamRule::Equal) {
        const Device* first = dev(rule.devices[0]);
        for (const auto& dn : rule.devices) {
          const Device* d = dev(dn);
          if (!d->params.count(rule.param) || !first->params.count(rule.param)) return false;
          if (!close_rel(d->params.at(rule.param), first->params.at(rule.param))) return false;
        }
      } else {
        const Device* unit = dev(rule.unit_device);
        if (!unit->params.count(rule.param)) return false;
        double u = unit->params.at(rule.param);
        for (const auto& dn : rule.devices) {
          const Device* d = dev(dn);
          if (!d->params.count(rule.param)) return false;
          if (!is_integer_ratio(d->params.at(rule.param), u)) return false;
        }
      }
    }
    return true;
  }

  bool internals_exclusive() const {
    std::set<VertexId> members(assignment.begin(), assignment.end());
    for (const auto& pnet : def.internal_nets) {
      VertexId nid = bound.at(pnet);
      for (const auto& e : g.adj[(size_t)nid])
        if (!members.count(e.to)) return false;
    }
    return true;
  }

  void search(size_t i) {
    if (i == def.devices.size()) {
      if (!params_ok() || !internals_exclusive()) return;
      Embedding emb;
      emb.devices = assignment;
      int pos = (int)g.size();
      for (VertexId v : assignment) pos = std::min(pos, (int)v);
      emb.position = pos;
      for (const auto& [pnet, vid] : bound) emb.net_binding[pnet] = g.v(vid).name;
      found.push_back(std::move(emb));
      return;
    }
    for (const auto& vx : g.vertices) {
      if (vx.klass != VClass::Element || used.count(vx.id)) continue;
      std::vector<std::string> added;
      if (device_fits(def.devices[i], vx.id, added)) {
        used.insert(vx.id);
        assignment.push_back(vx.id);
        search(i + 1);
        assignment.pop_back();
        used.erase(vx.id);
      }
      unbind(added);
    }
  }
};

std::vector<Embedding> all_embeddings(const CircuitGraph& g, const PrimitiveDef& def) {
  PatternMatcher m(g, def);
  m.search(0);
  // One embedding per member set; enumeration order fixes the orientation.
  std::set<std::set<VertexId>> seen;
  std::vector<Embedding> out;
  for (auto& emb : m.found) {
    std::set<VertexId> key(emb.devices.begin(), emb.devices.end());
    if (seen.insert(key).second) out.push_back(std::move(emb));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Embedding& a, const Embedding& b) { return a.position < b.position; });
  return out;
}

}  // namespace

std::vector<PrimitiveDef> builtin_library() {
  std::vector<PrimitiveDef> lib;
  for (DeviceKind k : {DeviceKind::Nmos, DeviceKind::Pmos}) {
    lib.push_back(make_dp(k));
    for (int outs = 1; outs <= 8; ++outs) lib.push_back(make_mirror(k, outs));
    lib.push_back(make_cascode(k));
    lib.push_back(make_level_shifter(k));
  }
  return lib;
}

std::vector<PrimitiveDef> load_library_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open primitive library '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in);
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw std::runtime_error("primitive library '" + path + "': missing or unsupported version");
  std::vector<PrimitiveDef> lib = builtin_library();
  for (const auto& jp : j.value("primitives", nlohmann::json::array())) {
    PrimitiveDef def;
    def.family = jp.at("name").get<std::string>();
    for (const auto& jd : jp.at("devices")) {
      PatternDevice pd;
      pd.name = jd.at("name").get<std::string>();
      pd.kind = kind_from_string(jd.at("kind").get<std::string>());
      if (pd.kind == DeviceKind::Nmos || pd.kind == DeviceKind::Pmos) {
        pd.terminals = {{Terminal::Drain, jd.at("d").get<std::string>()},
                        {Terminal::Gate, jd.at("g").get<std::string>()},
                        {Terminal::Source, jd.at("s").get<std::string>()}};
        def.polarity = pd.kind;
      } else {
        pd.terminals = {{Terminal::Pos, jd.at("p").get<std::string>()},
                        {Terminal::Neg, jd.at("n").get<std::string>()}};
      }
      def.devices.push_back(pd);
    }
    for (const auto& p : jp.value("ports", nlohmann::json::array()))
      def.ports.push_back(p.get<std::string>());
    for (const auto& p : jp.value("internal_nets", nlohmann::json::array()))
      def.internal_nets.insert(p.get<std::string>());
    for (const auto& p : jp.value("non_supply", nlohmann::json::array()))
      def.non_supply_nets.insert(p.get<std::string>());
    for (const auto& r : jp.value("param_rules", nlohmann::json::array())) {
      ParamRule rule;
      rule.kind = r.at("rule").get<std::string>() == "int_ratio" ? ParamRule::IntRatio
                                                                 : ParamRule::Equal;
      rule.param = r.at("param").get<std::string>();
      for (const auto& d : r.at("devices")) rule.devices.push_back(d.get<std::string>());
      rule.unit_device = r.value("unit_device", rule.devices.empty() ? "" : rule.devices[0]);
      def.param_rules.push_back(rule);
    }
    for (const auto& ps : jp.value("port_symmetries", nlohmann::json::array()))
      def.port_syms.emplace_back(ps.at(0).get<std::string>(), ps.at(1).get<std::string>());
    def.common_centroid = jp.value("common_centroid", false);
    lib.push_back(def);
  }
  return lib;
}

std::vector<std::vector<std::string>> enumerate_embeddings(const CircuitGraph& g,
                                                           const PrimitiveDef& def) {
  std::vector<std::vector<std::string>> out;
  for (const auto& emb : all_embeddings(g, def)) {
    std::vector<std::string> names;
    for (VertexId v : emb.devices) names.push_back(g.v(v).name);
    std::sort(names.begin(), names.end());
    out.push_back(names);
  }
  return out;
}

std::vector<SupernodeMatch> match_primitives(const CircuitGraph& g,
                                             const std::vector<PrimitiveDef>& lib) {
  std::vector<const PrimitiveDef*> order;
  for (const auto& def : lib) order.push_back(&def);
  std::stable_sort(order.begin(), order.end(),
                   [](const PrimitiveDef* a, const PrimitiveDef* b) { return a->size() > b->size(); });

  std::set<VertexId> claimed;
  std::vector<SupernodeMatch> matches;
  for (const PrimitiveDef* def : order) {
    for (const auto& emb : all_embeddings(g, *def)) {
      bool overlap = false;
      for (VertexId v : emb.devices)
        if (claimed.count(v)) overlap = true;
      if (overlap) continue;
      for (VertexId v : emb.devices) claimed.insert(v);
      SupernodeMatch m;
      m.def = def;
      for (VertexId v : emb.devices) m.members.push_back(g.v(v).name);
      m.net_binding = emb.net_binding;
      m.position = emb.position;
      matches.push_back(std::move(m));
    }
  }
  std::sort(matches.begin(), matches.end(),
            [](const SupernodeMatch& a, const SupernodeMatch& b) { return a.position < b.position; });

  // Mirrors share one numbering sequence so banks and single mirrors read
  // CMB1, SCM2, SCM3, ... in circuit order.
  std::map<std::string, int> counters;
  for (auto& m : matches) {
    std::string group = m.def->family;
    std::string prefix;
    if (m.def->family == "mirror")
      prefix = m.def->mirror_outputs >= 2 ? "CMB" : "SCM";
    else if (m.def->family == "dp")
      prefix = "DP";
    else if (m.def->family == "cascode")
      prefix = "CASC";
    else if (m.def->family == "level_shifter")
      prefix = "LS";
    else {
      prefix = m.def->family;
      std::transform(prefix.begin(), prefix.end(), prefix.begin(), ::toupper);
    }
    m.name = prefix + std::to_string(++counters[group]);
  }
  return matches;
}

CircuitGraph collapse(const CircuitGraph& g, const std::vector<SupernodeMatch>& matches) {
  if (matches.empty()) return g;
  std::map<std::string, const SupernodeMatch*> member_of;
  for (const auto& m : matches)
    for (const auto& dev : m.members) member_of[dev] = &m;

  CircuitGraph out;
  out.scope = g.scope;

  auto add_vertex = [&](Vertex vx) -> VertexId {
    vx.id = (VertexId)out.vertices.size();
    out.vertices.push_back(vx);
    out.adj.emplace_back();
    if (vx.klass == VClass::Element)
      out.element_index[vx.name] = vx.id;
    else
      out.net_index[vx.name] = vx.id;
    return vx.id;
  };

  // Surviving leaf/instance elements keep their payloads.
  for (const auto& vx : g.vertices)
    if (vx.klass == VClass::Element && !member_of.count(vx.name)) add_vertex(vx);

  // One supernode per match.
  std::map<const SupernodeMatch*, VertexId> node_of;
  for (const auto& m : matches) {
    Vertex vx;
    vx.klass = VClass::Element;
    vx.name = m.name;
    vx.comp.kind = ElementKind::Primitive;
    vx.comp.family = m.def->family;
    vx.comp.polarity = m.def->polarity;
    vx.comp.device_count = m.def->size();
    vx.comp.members = m.members;
    for (const auto& p : m.def->ports) vx.comp.pins.emplace_back(p, m.net_binding.at(p));
    auto dev_of = [&](const std::string& pname) -> const Device* {
      for (size_t i = 0; i < m.def->devices.size(); ++i)
        if (m.def->devices[i].name == pname) return g.v(g.element(m.members[i])).device;
      return nullptr;
    };
    if (m.def->family == "mirror") {
      vx.comp.ref_net = m.net_binding.at("ref");
      vx.comp.src_net = m.net_binding.at("src");
      const Device* unit = dev_of("m_ref");
      vx.comp.unit_w = unit->params.at("w");
      vx.comp.unit_l = unit->params.at("l");
      for (int i = 0; i < m.def->mirror_outputs; ++i) {
        std::string out_net = m.net_binding.at("out" + std::to_string(i));
        const Device* d = dev_of("m_out" + std::to_string(i));
        vx.comp.out_nets.emplace_back(out_net, d->params.at("w"));
      }
      std::sort(vx.comp.out_nets.begin(), vx.comp.out_nets.end());
    } else if (m.def->family == "dp") {
      const Device* unit = dev_of("m_a");
      vx.comp.unit_w = unit->params.at("w");
      vx.comp.unit_l = unit->params.at("l");
      vx.comp.src_net = m.net_binding.at("s");
      vx.comp.dp_sides[0] = {m.net_binding.at("da"), m.net_binding.at("ga")};
      vx.comp.dp_sides[1] = {m.net_binding.at("db"), m.net_binding.at("gb")};
    } else {
      const Device* unit = g.v(g.element(m.members[0])).device;
      vx.comp.unit_w = unit->params.count("w") ? unit->params.at("w") : 0;
      vx.comp.unit_l = unit->params.count("l") ? unit->params.at("l") : 0;
      for (const auto& [a, b] : m.def->port_syms)
        vx.comp.sym_port_pairs.emplace_back(m.net_binding.at(a), m.net_binding.at(b));
    }
    node_of[&m] = add_vertex(vx);
  }

  // Nets survive when referenced by a surviving element, a supernode port,
  // or when they are ports/supply of the scope.
  std::set<std::string> referenced;
  for (const auto& vx : g.vertices)
    if (vx.klass == VClass::Element && !member_of.count(vx.name))
      for (const auto& e : g.adj[(size_t)vx.id]) referenced.insert(g.v(e.to).name);
  for (const auto& m : matches)
    for (const auto& p : m.def->ports) referenced.insert(m.net_binding.at(p));
  for (const auto& vx : g.vertices) {
    if (vx.klass != VClass::Net) continue;
    if (!referenced.count(vx.name) && !vx.is_port && !vx.is_supply) continue;
    add_vertex(vx);
  }

  auto connect = [&](VertexId elem, VertexId net, const Edge& proto) {
    Edge e = proto;
    e.to = net;
    out.adj[(size_t)elem].push_back(e);
    Edge back = proto;
    back.to = elem;
    out.adj[(size_t)net].push_back(back);
  };

  for (const auto& vx : g.vertices) {
    if (vx.klass != VClass::Element || member_of.count(vx.name)) continue;
    VertexId ne = out.element(vx.name);
    for (const auto& e : g.adj[(size_t)vx.id]) {
      VertexId nn = out.net(g.v(e.to).name);
      if (nn == kNoVertex) continue;
      Edge proto = e;
      connect(ne, nn, proto);
    }
  }
  for (const auto& m : matches) {
    VertexId sn = node_of.at(&m);
    for (const auto& p : m.def->ports) {
      VertexId nn = out.net(m.net_binding.at(p));
      if (nn == kNoVertex) continue;
      Edge proto;
      proto.port = p;
      if (m.def->family == "mirror")
        proto.role = p == "ref"   ? PortRole::MirrorRef
                     : p == "src" ? PortRole::MirrorSrc
                                  : PortRole::MirrorOut;
      else if (m.def->family == "dp")
        proto.role = (p == "da" || p == "db")   ? PortRole::DpOut
                     : (p == "ga" || p == "gb") ? PortRole::DpGate
                                                : PortRole::DpSrc;
      else
        proto.role = PortRole::Named;
      connect(sn, nn, proto);
    }
  }
  out.finalize();
  return out;
}

std::vector<Seed> seed_candidates(const CircuitGraph& g) {
  std::vector<Seed> seeds;
  std::set<std::pair<VertexId, VertexId>> seen;

  auto push = [&](VertexId a, VertexId b, std::vector<VertexId> origins) {
    if (a == kNoVertex || b == kNoVertex || a == b) return;
    auto key = std::minmax(a, b);
    if (!seen.insert({key.first, key.second}).second) return;
    seeds.push_back({a, b, std::move(origins)});
  };

  std::vector<VertexId> prims;
  for (const auto& vx : g.vertices)
    if (vx.klass == VClass::Element && vx.comp.kind == ElementKind::Primitive)
      prims.push_back(vx.id);
  std::sort(prims.begin(), prims.end(),
            [&](VertexId a, VertexId b) { return g.v(a).name < g.v(b).name; });

  // Declared port symmetries.
  for (VertexId p : prims) {
    const CompositeInfo& c = g.v(p).comp;
    if (c.family == "dp") {
      push(g.net(c.dp_sides[0].first), g.net(c.dp_sides[1].first), {p});
    } else if (c.family == "mirror") {
      for (size_t i = 0; i < c.out_nets.size(); ++i)
        for (size_t j = i + 1; j < c.out_nets.size(); ++j)
          if (close_rel(c.out_nets[i].second, c.out_nets[j].second))
            push(g.net(c.out_nets[i].first), g.net(c.out_nets[j].first), {p});
    } else {
      for (const auto& [a, b] : c.sym_port_pairs) push(g.net(a), g.net(b), {p});
    }
  }

  // Like ports of like primitives (SCM vs CMB and friends).
  for (size_t i = 0; i < prims.size(); ++i)
    for (size_t j = i + 1; j < prims.size(); ++j) {
      const CompositeInfo& a = g.v(prims[i]).comp;
      const CompositeInfo& b = g.v(prims[j]).comp;
      if (a.family != b.family || a.polarity != b.polarity) continue;
      if (!close_rel(a.unit_w, b.unit_w) || !close_rel(a.unit_l, b.unit_l)) continue;
      std::vector<VertexId> org = {prims[i], prims[j]};
      if (a.family == "mirror") {
        push(g.net(a.ref_net), g.net(b.ref_net), org);
        for (const auto& [oa, wa] : a.out_nets)
          for (const auto& [ob, wb] : b.out_nets) push(g.net(oa), g.net(ob), org);
      } else if (a.family == "dp") {
        push(g.net(a.src_net), g.net(b.src_net), org);
        for (int x = 0; x < 2; ++x)
          for (int y = 0; y < 2; ++y) {
            push(g.net(a.dp_sides[x].first), g.net(b.dp_sides[y].first), org);
            push(g.net(a.dp_sides[x].second), g.net(b.dp_sides[y].second), org);
          }
      }
    }
  return seeds;
}

}  // namespace symcon
