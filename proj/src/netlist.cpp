#include "symcon/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>

namespace symcon {

const char* to_string(DeviceKind k) {
  switch (k) {
    case DeviceKind::Nmos: return "nmos";
    case DeviceKind::Pmos: return "pmos";
    case DeviceKind::Res: return "res";
    case DeviceKind::Cap: return "cap";
    case DeviceKind::Ind: return "ind";
    case DeviceKind::Subckt: return "subckt";
  }
  return "?";
}

ParseError::ParseError(const std::string& msg, int line, int col)
    : std::runtime_error("line " + std::to_string(line) + ": " + msg),
      line(line),
      col(col) {}

const std::string* Device::net_of(Terminal t) const {
  for (const auto& [term, net] : terminals)
    if (term == t) return &net;
  return nullptr;
}

const Device* SubcktDef::find_device(const std::string& dname) const {
  for (const auto& d : devices)
    if (d.name == dname) return &d;
  return nullptr;
}

const SubcktDef* Design::find(const std::string& name) const {
  for (const auto& s : subckts)
    if (s.name == name) return &s;
  return nullptr;
}

const SubcktDef& Design::top_def() const {
  const SubcktDef* def = find(top);
  if (!def) throw std::runtime_error("top subckt '" + top + "' not defined");
  return *def;
}

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = (char)std::tolower((unsigned char)c);
  return s;
}

bool is_ident(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_';
  });
}

struct Line {
  std::string text;
  int number;
};

// Strips comments, joins '+' continuations, keeps source line numbers.
std::vector<Line> logical_lines(const std::string& text) {
  std::vector<Line> out;
  std::istringstream in(text);
  std::string raw;
  int n = 0;
  while (std::getline(in, raw)) {
    ++n;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    size_t semi = raw.find(';');
    if (semi != std::string::npos) raw.erase(semi);
    size_t b = raw.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    size_t e = raw.find_last_not_of(" \t");
    std::string s = raw.substr(b, e - b + 1);
    if (s[0] == '*') continue;
    if (s[0] == '+') {
      if (out.empty()) throw ParseError("continuation with no previous card", n);
      out.back().text += " " + s.substr(1);
    } else {
      out.push_back({s, n});
    }
  }
  return out;
}

std::vector<std::string> tokens_of(const std::string& s) {
  std::vector<std::string> toks;
  std::istringstream in(s);
  std::string t;
  while (in >> t) toks.push_back(t);
  return toks;
}

void check_positive(const std::string& name, double v, int line) {
  if (!std::isfinite(v) || v <= 0.0)
    throw ParseError("parameter '" + name + "' must be finite and positive", line);
}

std::map<std::string, double> parse_params(const std::vector<std::string>& toks,
                                           size_t from, int line) {
  std::map<std::string, double> params;
  for (size_t i = from; i < toks.size(); ++i) {
    size_t eq = toks[i].find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= toks[i].size())
      throw ParseError("expected name=value parameter, got '" + toks[i] + "'", line);
    std::string key = lower(toks[i].substr(0, eq));
    double v = parse_si_value(toks[i].substr(eq + 1), line);
    check_positive(key, v, line);
    params[key] = v;
  }
  return params;
}

Device parse_device_card(const std::vector<std::string>& toks, int line) {
  Device dev;
  dev.name = toks[0];
  dev.line = line;
  if (!is_ident(dev.name)) throw ParseError("bad device name '" + dev.name + "'", line);
  char c = (char)std::tolower((unsigned char)toks[0][0]);

  auto need = [&](size_t n, const char* what) {
    if (toks.size() < n) throw ParseError(std::string("truncated ") + what + " card", line);
  };

  // 'd' cards are dummy transistors; CDL-style exports name dummies D1, D2,
  // ... and the model column still decides nmos/pmos.
  if (c == 'm' || c == 'd') {
    need(6, "MOS");
    std::string model = lower(toks[5]);
    if (model == "nmos")
      dev.kind = DeviceKind::Nmos;
    else if (model == "pmos")
      dev.kind = DeviceKind::Pmos;
    else
      throw ParseError("unknown MOS model '" + toks[5] + "' (expected nmos|pmos)", line);
    dev.model = model;
    dev.terminals = {{Terminal::Drain, toks[1]},
                     {Terminal::Gate, toks[2]},
                     {Terminal::Source, toks[3]},
                     {Terminal::Body, toks[4]}};
    dev.params = parse_params(toks, 6, line);
    if (!dev.params.count("w") || !dev.params.count("l"))
      throw ParseError("MOS card requires w= and l=", line);
    return dev;
  }

  if (c == 'r' || c == 'c' || c == 'l') {
    need(4, "two-terminal");
    dev.kind = c == 'r' ? DeviceKind::Res : c == 'c' ? DeviceKind::Cap : DeviceKind::Ind;
    dev.terminals = {{Terminal::Pos, toks[1]}, {Terminal::Neg, toks[2]}};
    std::string value_key(1, c);
    double v = parse_si_value(toks[3], line);
    check_positive(value_key, v, line);
    dev.params = parse_params(toks, 4, line);
    dev.params[value_key] = v;
    return dev;
  }

  if (c == 'x') {
    // X<name> node+ subcktname [param=value ...]
    size_t end = toks.size();
    while (end > 1 && toks[end - 1].find('=') != std::string::npos) --end;
    if (end < 3) throw ParseError("instance card needs at least one node and a subckt name", line);
    dev.kind = DeviceKind::Subckt;
    dev.model = toks[end - 1];
    for (size_t i = 1; i + 1 < end; ++i)
      dev.terminals.emplace_back(Terminal::Pin, toks[i]);
    dev.params = parse_params(toks, end, line);
    return dev;
  }

  throw ParseError("unknown card prefix '" + std::string(1, toks[0][0]) + "'", line);
}

void check_no_recursion(const Design& d) {
  // 0 = unvisited, 1 = on stack, 2 = done
  std::map<std::string, int> state;
  std::vector<const SubcktDef*> stack;
  std::function<void(const SubcktDef&)> visit = [&](const SubcktDef& def) {
    state[def.name] = 1;
    for (const auto& dev : def.devices) {
      if (dev.kind != DeviceKind::Subckt) continue;
      const SubcktDef* child = d.find(dev.model);
      if (!child)
        throw ParseError("instance '" + dev.name + "' references undefined subckt '" +
                             dev.model + "'",
                         dev.line);
      int st = state.count(child->name) ? state[child->name] : 0;
      if (st == 1)
        throw ParseError("recursive instantiation of subckt '" + child->name + "'", dev.line);
      if (st == 0) visit(*child);
    }
    state[def.name] = 2;
  };
  for (const auto& s : d.subckts)
    if (!state.count(s.name)) visit(s);
}

}  // namespace

double parse_si_value(const std::string& token, int line) {
  if (token.empty()) throw ParseError("empty numeric value", line);
  const char* p = token.c_str();
  char* endp = nullptr;
  double v = std::strtod(p, &endp);
  if (endp == p) throw ParseError("bad numeric value '" + token + "'", line);
  std::string suffix = lower(std::string(endp));
  if (suffix.empty()) {
    if (!std::isfinite(v)) throw ParseError("non-finite value '" + token + "'", line);
    return v;
  }
  static const std::vector<std::pair<std::string, double>> kSuffixes = {
      {"meg", 1e6}, {"f", 1e-15}, {"p", 1e-12}, {"n", 1e-9}, {"u", 1e-6},
      {"m", 1e-3},  {"k", 1e3},   {"g", 1e9},
  };
  for (const auto& [sfx, mult] : kSuffixes)
    if (suffix == sfx) return v * mult;
  throw ParseError("unknown SI suffix '" + std::string(endp) + "' in '" + token + "'", line);
}

Design parse_netlist(const std::string& text) {
  Design design;
  std::vector<Line> lines = logical_lines(text);

  SubcktDef main_def;
  main_def.name = "main";
  SubcktDef* current = nullptr;  // inside .subckt when non-null
  SubcktDef pending;

  auto add_device = [&](SubcktDef& def, Device dev) {
    if (def.find_device(dev.name))
      throw ParseError("duplicate device name '" + dev.name + "'", dev.line);
    def.devices.push_back(std::move(dev));
  };

  for (const auto& ln : lines) {
    std::vector<std::string> toks = tokens_of(ln.text);
    if (toks.empty()) continue;
    std::string head = lower(toks[0]);

    if (head == ".subckt") {
      if (current) throw ParseError("nested .subckt is not supported", ln.number);
      if (toks.size() < 2) throw ParseError(".subckt requires a name", ln.number);
      pending = SubcktDef{};
      pending.name = toks[1];
      pending.line = ln.number;
      if (!is_ident(pending.name))
        throw ParseError("bad subckt name '" + pending.name + "'", ln.number);
      if (design.find(pending.name))
        throw ParseError("duplicate subckt definition '" + pending.name + "'", ln.number);
      for (size_t i = 2; i < toks.size(); ++i) pending.ports.push_back(toks[i]);
      current = &pending;
      continue;
    }
    if (head == ".ends") {
      if (!current) throw ParseError(".ends without .subckt", ln.number);
      if (toks.size() > 1 && toks[1] != current->name)
        throw ParseError(".ends name '" + toks[1] + "' does not match '" + current->name + "'",
                         ln.number);
      design.subckts.push_back(std::move(pending));
      current = nullptr;
      continue;
    }
    if (head == ".global") {
      for (size_t i = 1; i < toks.size(); ++i) design.global_nets.insert(toks[i]);
      continue;
    }
    if (head[0] == '.') throw ParseError("unsupported directive '" + toks[0] + "'", ln.number);

    Device dev = parse_device_card(toks, ln.number);
    add_device(current ? *current : main_def, std::move(dev));
  }
  if (current) throw ParseError("missing .ends for subckt '" + pending.name + "'", pending.line);

  if (!main_def.devices.empty()) {
    if (design.find("main"))
      throw ParseError("top-level cards conflict with explicit subckt 'main'", main_def.devices[0].line);
    design.subckts.push_back(std::move(main_def));
    design.top = "main";
  } else {
    // Top: the unique subckt nobody instantiates.
    std::set<std::string> instantiated;
    for (const auto& s : design.subckts)
      for (const auto& dev : s.devices)
        if (dev.kind == DeviceKind::Subckt) instantiated.insert(dev.model);
    std::vector<std::string> roots;
    for (const auto& s : design.subckts)
      if (!instantiated.count(s.name)) roots.push_back(s.name);
    if (roots.size() != 1)
      throw ParseError(roots.empty() ? "no top-level cell found"
                                     : "ambiguous top cell; candidates: " + roots[0] + ", ...",
                       1);
    design.top = roots[0];
  }

  // Resolve instances and check arity.
  for (auto& s : design.subckts) {
    for (auto& dev : s.devices) {
      if (dev.kind != DeviceKind::Subckt) continue;
      const SubcktDef* def = design.find(dev.model);
      if (!def)
        throw ParseError("instance '" + dev.name + "' references undefined subckt '" +
                             dev.model + "'",
                         dev.line);
      if (dev.terminals.size() != def->ports.size())
        throw ParseError("instance '" + dev.name + "' has " +
                             std::to_string(dev.terminals.size()) + " pins but subckt '" +
                             def->name + "' declares " + std::to_string(def->ports.size()),
                         dev.line);
    }
  }
  check_no_recursion(design);
  return design;
}

std::string emit_netlist(const Design& d) {
  std::ostringstream out;
  auto emit_value = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto emit_device = [&](const Device& dev) {
    out << dev.name;
    for (const auto& [t, net] : dev.terminals) out << ' ' << net;
    if (dev.kind == DeviceKind::Nmos || dev.kind == DeviceKind::Pmos) {
      out << ' ' << dev.model;
      for (const auto& [k, v] : dev.params) out << ' ' << k << '=' << emit_value(v);
    } else if (dev.kind == DeviceKind::Subckt) {
      out << ' ' << dev.model;
      for (const auto& [k, v] : dev.params) out << ' ' << k << '=' << emit_value(v);
    } else {
      std::string value_key = dev.kind == DeviceKind::Res ? "r"
                              : dev.kind == DeviceKind::Cap ? "c" : "l";
      out << ' ' << emit_value(dev.params.at(value_key));
      for (const auto& [k, v] : dev.params)
        if (k != value_key) out << ' ' << k << '=' << emit_value(v);
    }
    out << '\n';
  };

  if (!d.global_nets.empty()) {
    out << ".global";
    for (const auto& n : d.global_nets) out << ' ' << n;
    out << '\n';
  }
  for (const auto& s : d.subckts) {
    bool is_main_top = s.name == d.top && s.name == "main";
    if (!is_main_top) {
      out << ".subckt " << s.name;
      for (const auto& p : s.ports) out << ' ' << p;
      out << '\n';
    }
    for (const auto& dev : s.devices) emit_device(dev);
    if (!is_main_top) out << ".ends\n";
  }
  return out.str();
}

std::set<std::string> collect_nets(const SubcktDef& def) {
  std::set<std::string> nets(def.ports.begin(), def.ports.end());
  for (const auto& dev : def.devices)
    for (const auto& [t, net] : dev.terminals) nets.insert(net);
  return nets;
}

std::set<std::string> identify_supply_nets(const Design& d,
                                           const std::vector<std::string>& overrides,
                                           std::string* warning) {
  std::set<std::string> all;
  for (const auto& s : d.subckts) {
    auto nets = collect_nets(s);
    all.insert(nets.begin(), nets.end());
  }
  std::set<std::string> result(overrides.begin(), overrides.end());
  static const std::vector<std::string> kPrefixes = {"vdd", "vss", "gnd", "vcc", "avdd", "avss"};
  for (const auto& net : all) {
    std::string l = lower(net);
    if (l == "0") {
      result.insert(net);
      continue;
    }
    for (const auto& p : kPrefixes)
      if (l.rfind(p, 0) == 0) {
        result.insert(net);
        break;
      }
  }
  if (result.empty() && warning)
    *warning = "no supply nets identified; traversal will not exclude rails";
  return result;
}

int device_count_recursive(const Design& d, const SubcktDef& def) {
  int n = 0;
  for (const auto& dev : def.devices) {
    if (dev.kind == DeviceKind::Subckt) {
      const SubcktDef* child = d.find(dev.model);
      n += child ? device_count_recursive(d, *child) : 0;
    } else {
      ++n;
    }
  }
  return n;
}

}  // namespace symcon
