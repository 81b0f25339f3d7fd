#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace symcon {

enum class DeviceKind { Nmos, Pmos, Res, Cap, Ind, Subckt };

const char* to_string(DeviceKind k);

// Terminal roles in card order: MOS = d g s b, passives = pos neg,
// subckt instances = one Pin per port of the definition.
enum class Terminal { Drain, Gate, Source, Body, Pos, Neg, Pin };

struct Device {
  std::string name;
  DeviceKind kind = DeviceKind::Res;
  std::string model;  // nmos/pmos for MOS cards, subckt name for X cards
  std::vector<std::pair<Terminal, std::string>> terminals;
  std::map<std::string, double> params;  // values normalized to base units
  int line = 0;

  const std::string* net_of(Terminal t) const;
};

struct SubcktDef {
  std::string name;
  std::vector<std::string> ports;
  std::vector<Device> devices;
  int line = 0;

  const Device* find_device(const std::string& name) const;
};

struct Design {
  std::vector<SubcktDef> subckts;  // definition order
  std::string top;
  std::set<std::string> global_nets;

  const SubcktDef* find(const std::string& name) const;
  const SubcktDef& top_def() const;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line, int col = 0);
  int line;
  int col;
};

// Parses the SPICE subset documented in the README. Throws ParseError with
// the offending line on malformed input, unresolved references, arity
// mismatches and duplicate definitions.
Design parse_netlist(const std::string& text);

// Re-emits a design as netlist text. parse_netlist(emit_netlist(d)) yields a
// structurally identical design.
std::string emit_netlist(const Design& d);

// "2u" -> 2e-6. Throws ParseError on malformed numbers or unknown suffixes.
double parse_si_value(const std::string& token, int line = 0);

std::set<std::string> collect_nets(const SubcktDef& def);

// Union of overrides and case-insensitive name conventions (vdd*, vss*,
// gnd*, vcc*, avdd*, avss*, "0"). Empty result is allowed; *warning is set
// when nothing matched.
std::set<std::string> identify_supply_nets(const Design& d,
                                           const std::vector<std::string>& overrides,
                                           std::string* warning = nullptr);

// Leaf devices in def, following instances recursively.
int device_count_recursive(const Design& d, const SubcktDef& def);

}  // namespace symcon
