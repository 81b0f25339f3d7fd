#include "symcon/constraints.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "symcon/symmetry.hpp"

namespace symcon {

const char* to_string(ConstraintType t) {
  switch (t) {
    case ConstraintType::Pair: return "pair";
    case ConstraintType::SelfSym: return "self_symmetric";
    case ConstraintType::Array: return "array";
    case ConstraintType::SymmetricNets: return "symmetric_nets";
    case ConstraintType::CommonCentroid: return "common_centroid";
  }
  return "?";
}

namespace {

int type_rank(ConstraintType t) {
  switch (t) {
    case ConstraintType::Array: return 0;
    case ConstraintType::Pair: return 1;
    case ConstraintType::SelfSym: return 2;
    case ConstraintType::SymmetricNets: return 3;
    case ConstraintType::CommonCentroid: return 4;
  }
  return 9;
}

std::string sort_key(const Constraint& c) {
  std::ostringstream k;
  k << c.scope << "|" << type_rank(c.type) << "|";
  switch (c.type) {
    case ConstraintType::Array:
      k << c.root << "|" << c.name;
      for (const auto& block : c.members)
        for (const auto& m : block) k << "," << m;
      break;
    case ConstraintType::CommonCentroid:
      k << c.source;
      for (const auto& d : c.devices) k << "," << d;
      break;
    default:
      k << c.a << "|" << c.b;
  }
  return k.str();
}

}  // namespace

void ConstraintSet::canonicalize() {
  for (auto& c : items) {
    if ((c.type == ConstraintType::Pair || c.type == ConstraintType::SymmetricNets) &&
        c.a > c.b)
      std::swap(c.a, c.b);
    for (auto& block : c.members) std::sort(block.begin(), block.end());
    std::sort(c.devices.begin(), c.devices.end());
    std::sort(c.self_members.begin(), c.self_members.end());
    std::sort(c.member_matches.begin(), c.member_matches.end(),
              [](const MemberMatch& x, const MemberMatch& y) {
                return std::tie(x.a, x.b) < std::tie(y.a, y.b);
              });
  }
  std::stable_sort(items.begin(), items.end(), [](const Constraint& x, const Constraint& y) {
    return sort_key(x) < sort_key(y);
  });
  // Duplicate records collapse; axis ids renumber in emission order.
  std::vector<Constraint> dedup;
  std::map<std::string, int> first_axis_of_key;
  for (auto& c : items) {
    std::string key = sort_key(c);
    if (!dedup.empty() && sort_key(dedup.back()) == key && dedup.back().kind == c.kind &&
        dedup.back().member_matches.size() == c.member_matches.size())
      continue;
    dedup.push_back(std::move(c));
  }
  items = std::move(dedup);
  std::map<std::pair<std::string, int>, int> axis_map;
  for (auto& c : items) {
    if (c.type == ConstraintType::CommonCentroid) {
      c.axis = -1;
      continue;
    }
    auto key = std::make_pair(c.scope, c.axis);
    auto it = axis_map.find(key);
    if (it == axis_map.end()) it = axis_map.emplace(key, (int)axis_map.size()).first;
    c.axis = it->second;
  }
  std::sort(warnings.begin(), warnings.end());
  warnings.erase(std::unique(warnings.begin(), warnings.end()), warnings.end());
}

std::vector<std::string> ConstraintSet::flat_members(const Constraint& c) const {
  std::vector<std::string> out;
  for (const auto& block : c.members)
    for (const auto& m : block) out.push_back(m);
  std::sort(out.begin(), out.end());
  return out;
}

std::string emit_constraints(const ConstraintSet& set) {
  nlohmann::json j;
  j["version"] = 1;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : set.items) {
    nlohmann::json jc;
    jc["type"] = to_string(c.type);
    jc["scope"] = c.scope;
    if (c.axis >= 0) jc["axis"] = c.axis;
    switch (c.type) {
      case ConstraintType::Pair:
      case ConstraintType::SymmetricNets:
        jc["a"] = c.a;
        jc["b"] = c.b;
        jc["kind"] = c.kind;
        if (c.kind == "approx") jc["score"] = c.score;
        break;
      case ConstraintType::SelfSym:
        jc["block"] = c.a;
        break;
      case ConstraintType::Array: {
        jc["name"] = c.name;
        jc["root"] = c.root;
        jc["members"] = c.members;
        nlohmann::json mm = nlohmann::json::array();
        for (const auto& m : c.member_matches) {
          nlohmann::json e;
          e["a"] = m.a;
          e["b"] = m.b;
          e["kind"] = m.kind;
          if (m.kind == "approx") e["score"] = m.score;
          mm.push_back(e);
        }
        jc["member_matches"] = mm;
        jc["self_members"] = c.self_members;
        break;
      }
      case ConstraintType::CommonCentroid:
        jc["devices"] = c.devices;
        jc["source"] = c.source;
        break;
    }
    arr.push_back(jc);
  }
  j["constraints"] = arr;
  return j.dump(2) + "\n";
}

void emit_constraints_file(const ConstraintSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write constraints file '" + path + "'");
  out << emit_constraints(set);
}

ConstraintSet parse_constraints(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("version", 0) != 1)
    throw std::runtime_error("unsupported constraints file version");
  ConstraintSet set;
  for (const auto& jc : j.at("constraints")) {
    Constraint c;
    std::string t = jc.at("type").get<std::string>();
    c.scope = jc.value("scope", "");
    c.axis = jc.value("axis", -1);
    if (t == "pair" || t == "symmetric_nets") {
      c.type = t == "pair" ? ConstraintType::Pair : ConstraintType::SymmetricNets;
      c.a = jc.at("a").get<std::string>();
      c.b = jc.at("b").get<std::string>();
      c.kind = jc.value("kind", "exact");
      c.score = jc.value("score", c.kind == "exact" ? 1.0 : 0.0);
    } else if (t == "self_symmetric") {
      c.type = ConstraintType::SelfSym;
      c.a = jc.at("block").get<std::string>();
    } else if (t == "array") {
      c.type = ConstraintType::Array;
      c.name = jc.at("name").get<std::string>();
      c.root = jc.value("root", "");
      c.members = jc.at("members").get<std::vector<std::vector<std::string>>>();
      for (const auto& m : jc.value("member_matches", nlohmann::json::array())) {
        MemberMatch mm;
        mm.a = m.at("a").get<int>();
        mm.b = m.at("b").get<int>();
        mm.kind = m.value("kind", "exact");
        mm.score = m.value("score", mm.kind == "exact" ? 1.0 : 0.0);
        c.member_matches.push_back(mm);
      }
      c.self_members = jc.value("self_members", std::vector<int>{});
    } else if (t == "common_centroid") {
      c.type = ConstraintType::CommonCentroid;
      c.devices = jc.at("devices").get<std::vector<std::string>>();
      c.source = jc.value("source", "");
    } else {
      throw std::runtime_error("unknown constraint type '" + t + "'");
    }
    set.items.push_back(std::move(c));
  }
  return set;
}

ConstraintSet parse_constraints_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open constraints file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_constraints(ss.str());
}

int VerifyReport::exit_code() const {
  if (!inconsistent.empty()) return 2;
  if (!stale.empty()) return 3;
  return 0;
}

std::string VerifyReport::to_string() const {
  std::ostringstream out;
  out << "checked: " << checked_ok.size() + inconsistent.size() + stale.size()
      << ", consistent: " << checked_ok.size() << ", inconsistent: " << inconsistent.size()
      << ", stale: " << stale.size() << "\n";
  for (const auto& s : inconsistent) out << "INCONSISTENT " << s << "\n";
  for (const auto& s : stale) out << "STALE " << s << "\n";
  return out.str();
}

namespace {

// Name-agnostic signature used to re-check that two blocks can still match.
std::string element_signature(const CircuitGraph& g, VertexId id) {
  const Vertex& vx = g.v(id);
  std::ostringstream s;
  if (vx.comp.kind == ElementKind::Leaf) {
    s << "leaf|" << to_string(vx.device->kind);
    for (const auto& [k, v] : vx.device->params) s << "|" << k << "=" << v;
  } else {
    s << "comp|" << vx.comp.family << "|" << vx.comp.unit_w << "|" << vx.comp.unit_l;
  }
  return s.str();
}

struct ScopeGraphs {
  CircuitGraph collapsed;
  CircuitGraph uncollapsed;
};

}  // namespace

VerifyReport verify_constraints(const ConstraintSet& set, const Design& design,
                                const SymmetryOptions& opts_in) {
  SymmetryOptions opts = opts_in;
  if (opts.library.empty()) opts.library = builtin_library();
  VerifyReport report;

  std::set<std::string> supply = identify_supply_nets(design, opts.supply_overrides);
  std::map<std::string, AnalysisSummary> summaries;
  std::map<std::string, ScopeGraphs> scopes;
  std::function<void(const SubcktDef&)> visit = [&](const SubcktDef& def) {
    if (scopes.count(def.name)) return;
    for (const auto& dev : def.devices)
      if (dev.kind == DeviceKind::Subckt)
        if (const SubcktDef* child = design.find(dev.model)) visit(*child);
    ScopeAnalysis sa = analyze_scope(design, def, summaries, supply, opts);
    summaries[def.name] = sa.summary;
    scopes[def.name] = {std::move(sa.graph), std::move(sa.uncollapsed)};
  };
  visit(design.top_def());

  // Arrays defined by this constraint set resolve as block names.
  std::map<std::pair<std::string, std::string>, const Constraint*> arrays;
  for (const auto& c : set.items)
    if (c.type == ConstraintType::Array) arrays[{c.scope, c.name}] = &c;

  auto describe = [](const Constraint& c) {
    std::ostringstream s;
    s << to_string(c.type) << " " << c.scope << ":";
    if (c.type == ConstraintType::Array)
      s << c.name;
    else if (c.type == ConstraintType::CommonCentroid)
      s << c.source;
    else
      s << c.a << (c.b.empty() ? "" : "," + c.b);
    return s.str();
  };

  for (const auto& c : set.items) {
    auto sit = scopes.find(c.scope);
    if (sit == scopes.end()) {
      report.stale.push_back(describe(c) + ": unknown scope");
      continue;
    }
    const ScopeGraphs& sg = sit->second;
    auto resolve = [&](const std::string& full) -> VertexId {
      std::string base = full.substr(0, full.find('/'));
      VertexId id = sg.collapsed.element(base);
      if (id == kNoVertex) {
        // element inside a collapsed primitive
        VertexId raw = sg.uncollapsed.element(base);
        if (raw != kNoVertex) return -2;  // resolvable, device level
      }
      return id;
    };
    bool stale = false, inconsistent = false;
    std::string why;

    switch (c.type) {
      case ConstraintType::Pair:
      case ConstraintType::SymmetricNets: {
        bool a_arr = arrays.count({c.scope, c.a}) > 0;
        bool b_arr = arrays.count({c.scope, c.b}) > 0;
        if (a_arr != b_arr) {
          inconsistent = true;
          why = "array paired with non-array";
          break;
        }
        if (a_arr) {
          const Constraint* arr_a = arrays[{c.scope, c.a}];
          const Constraint* arr_b = arrays[{c.scope, c.b}];
          if (set.flat_members(*arr_a).size() != set.flat_members(*arr_b).size()) {
            inconsistent = true;
            why = "paired arrays differ in size";
          }
          break;
        }
        VertexId va = resolve(c.a);
        VertexId vb = resolve(c.b);
        if (va == kNoVertex || vb == kNoVertex) {
          stale = true;
          why = "name does not resolve";
          break;
        }
        if (va == -2 || vb == -2) break;  // collapsed-device reference, names exist
        if (c.kind == "exact" &&
            element_signature(sg.collapsed, va) != element_signature(sg.collapsed, vb)) {
          inconsistent = true;
          why = "elements no longer match";
        }
        break;
      }
      case ConstraintType::SelfSym: {
        if (arrays.count({c.scope, c.a})) break;
        VertexId va = resolve(c.a);
        if (va == kNoVertex) {
          stale = true;
          why = "name does not resolve";
        }
        break;
      }
      case ConstraintType::Array: {
        for (const auto& block : c.members)
          for (const auto& m : block)
            if (resolve(m) == kNoVertex) {
              stale = true;
              why = "member '" + m + "' does not resolve";
            }
        if (stale) break;
        for (const auto& mm : c.member_matches) {
          if (mm.a < 0 || mm.b < 0 || mm.a >= (int)c.members.size() ||
              mm.b >= (int)c.members.size()) {
            inconsistent = true;
            why = "member match index out of range";
            break;
          }
          if (mm.kind != "exact") continue;
          // exact-matched blocks must still have identical signatures
          auto signature_of = [&](const std::vector<std::string>& block) {
            std::vector<std::string> sigs;
            for (const auto& m : block) {
              VertexId id = resolve(m);
              if (id >= 0)
                sigs.push_back(element_signature(sg.collapsed, id));
              else if (id == -2)
                sigs.push_back(element_signature(sg.uncollapsed, sg.uncollapsed.element(m)));
            }
            std::sort(sigs.begin(), sigs.end());
            return sigs;
          };
          if (signature_of(c.members[(size_t)mm.a]) != signature_of(c.members[(size_t)mm.b])) {
            inconsistent = true;
            why = "array members no longer match";
          }
        }
        break;
      }
      case ConstraintType::CommonCentroid: {
        for (const auto& d : c.devices)
          if (sg.uncollapsed.element(d) == kNoVertex) {
            stale = true;
            why = "device '" + d + "' does not resolve";
          }
        break;
      }
    }
    if (stale)
      report.stale.push_back(describe(c) + ": " + why);
    else if (inconsistent)
      report.inconsistent.push_back(describe(c) + ": " + why);
    else
      report.checked_ok.push_back(describe(c));
  }
  return report;
}

}  // namespace symcon
