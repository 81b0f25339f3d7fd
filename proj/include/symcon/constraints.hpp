#pragma once

#include <string>
#include <vector>

#include "symcon/netlist.hpp"

namespace symcon {

enum class ConstraintType { Pair, SelfSym, Array, SymmetricNets, CommonCentroid };

const char* to_string(ConstraintType t);

struct MemberMatch {
  int a = 0;
  int b = 0;
  std::string kind = "exact";  // "exact" | "approx"
  double score = 1.0;
};

// Tagged union over the constraint kinds; unused fields stay empty.
struct Constraint {
  ConstraintType type = ConstraintType::Pair;
  std::string scope;  // subckt the constraint belongs to
  int axis = 0;

  // Pair / SelfSym / SymmetricNets. Names may carry a "/netport" suffix for
  // supernodes, e.g. "CMB1/out1".
  std::string a, b;
  std::string kind = "exact";
  double score = 1.0;

  // Array
  std::string name;
  std::string root;
  std::vector<std::vector<std::string>> members;
  std::vector<MemberMatch> member_matches;
  std::vector<int> self_members;  // member indices lying on the axis

  // CommonCentroid
  std::vector<std::string> devices;
  std::string source;  // primitive instance that declared it

  bool operator==(const Constraint&) const = default;
};

struct ConstraintSet {
  std::vector<Constraint> items;
  std::vector<std::string> warnings;

  // Sort, deduplicate, renumber axes in emission order. Emitted files are
  // byte-stable because everything downstream is ordered.
  void canonicalize();
  std::vector<std::string> flat_members(const Constraint& c) const;
};

std::string emit_constraints(const ConstraintSet& set);
void emit_constraints_file(const ConstraintSet& set, const std::string& path);
ConstraintSet parse_constraints(const std::string& json_text);
ConstraintSet parse_constraints_file(const std::string& path);

struct VerifyReport {
  std::vector<std::string> inconsistent;
  std::vector<std::string> stale;
  std::vector<std::string> checked_ok;

  // 0 ok, 2 inconsistency, 3 stale references.
  int exit_code() const;
  std::string to_string() const;
};

struct SymmetryOptions;  // symmetry.hpp

// Re-checks every constraint against freshly rebuilt graphs: pairs and array
// members must still be MatchPair-positive, names must resolve.
VerifyReport verify_constraints(const ConstraintSet& set, const Design& design,
                                const SymmetryOptions& opts);

}  // namespace symcon
