#include "doctest.h"
#include "symcon/constraints.hpp"
#include "symcon/netlist.hpp"
#include "symcon/symmetry.hpp"

#include <fstream>
#include <sstream>

using namespace symcon;

namespace {
std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(SYMCON_FIXTURES) + "/" + name);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Constraint pair_c(const std::string& scope, const std::string& a, const std::string& b) {
  Constraint c;
  c.type = ConstraintType::Pair;
  c.scope = scope;
  c.a = a;
  c.b = b;
  return c;
}
}  // namespace

TEST_CASE("empty set emits the versioned skeleton") {
  ConstraintSet set;
  set.canonicalize();
  std::string text = emit_constraints(set);
  CHECK(text.find("\"version\": 1") != std::string::npos);
  CHECK(text.find("\"constraints\": []") != std::string::npos);
}

TEST_CASE("duplicate insertion emits a single record") {
  ConstraintSet set;
  set.items.push_back(pair_c("top", "R1", "R2"));
  set.items.push_back(pair_c("top", "R2", "R1"));  // same pair, swapped
  set.canonicalize();
  CHECK(set.items.size() == 1);
  CHECK(set.items[0].a == "R1");
  CHECK(set.items[0].b == "R2");
}

TEST_CASE("emit then parse round trips to an equal set") {
  ConstraintSet set;
  set.items.push_back(pair_c("top", "R1", "R2"));
  Constraint self;
  self.type = ConstraintType::SelfSym;
  self.scope = "top";
  self.a = "SCM3";
  set.items.push_back(self);
  Constraint arr;
  arr.type = ConstraintType::Array;
  arr.scope = "top";
  arr.name = "Dummy1";
  arr.root = "out1";
  arr.members = {{"D1"}, {"D2"}};
  arr.member_matches = {{0, 1, "exact", 1.0}};
  set.items.push_back(arr);
  Constraint nets;
  nets.type = ConstraintType::SymmetricNets;
  nets.scope = "top";
  nets.a = "out1";
  nets.b = "out2";
  set.items.push_back(nets);
  Constraint cc;
  cc.type = ConstraintType::CommonCentroid;
  cc.scope = "top";
  cc.devices = {"MP0", "MP1"};
  cc.source = "CMB1";
  set.items.push_back(cc);
  set.canonicalize();

  ConstraintSet back = parse_constraints(emit_constraints(set));
  back.canonicalize();
  CHECK(emit_constraints(back) == emit_constraints(set));
}

TEST_CASE("emission is byte-stable and sorted") {
  ConstraintSet a, b;
  a.items.push_back(pair_c("top", "R1", "R2"));
  a.items.push_back(pair_c("top", "C1", "C2"));
  b.items.push_back(pair_c("top", "C1", "C2"));
  b.items.push_back(pair_c("top", "R1", "R2"));
  a.canonicalize();
  b.canonicalize();
  CHECK(emit_constraints(a) == emit_constraints(b));
}

TEST_CASE("verify flags a hand-edited R1/C1 pairing as inconsistent") {
  Design d = parse_netlist(read_fixture("ota.sp"));
  SymmetryOptions opts;
  ConstraintSet set;
  set.items.push_back(pair_c("ota", "C1", "R1"));
  set.canonicalize();
  VerifyReport rep = verify_constraints(set, d, opts);
  CHECK(rep.inconsistent.size() == 1);
  CHECK(rep.exit_code() == 2);
}

TEST_CASE("verify reports stale references to deleted devices") {
  Design d = parse_netlist(read_fixture("ota.sp"));
  SymmetryOptions opts;
  ConstraintSet set;
  set.items.push_back(pair_c("ota", "R1", "R99"));
  set.canonicalize();
  VerifyReport rep = verify_constraints(set, d, opts);
  CHECK(rep.stale.size() == 1);
  CHECK(rep.exit_code() == 3);
}

TEST_CASE("freshly detected constraints verify clean on every fixture") {
  for (const char* fixture : {"ota.sp", "cs_lna.sp", "r2r_dac.sp", "fir4.sp"}) {
    CAPTURE(fixture);
    Design d = parse_netlist(read_fixture(fixture));
    SymmetryOptions opts;
    if (std::string(fixture) == "fir4.sp") {
      opts.approx = ApproxMode::Exact;
      opts.bound = 0.25;
    }
    ConstraintSet set = run_detection(d, opts);
    VerifyReport rep = verify_constraints(set, d, opts);
    CAPTURE(rep.to_string());
    CHECK(rep.inconsistent.empty());
    CHECK(rep.stale.empty());
    CHECK(rep.exit_code() == 0);
  }
}
