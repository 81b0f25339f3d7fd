#include "symcon/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace symcon {

CircuitGraph FlatGraph::to_circuit_graph(const std::string& scope) const {
  CircuitGraph g;
  g.scope = scope;
  g.owned_devices = std::make_shared<std::deque<Device>>();
  for (const auto& el : elems) {
    Device dev;
    dev.name = el.name;
    dev.kind = el.kind;
    dev.params = el.params;
    g.owned_devices->push_back(std::move(dev));
    Vertex vx;
    vx.id = (VertexId)g.vertices.size();
    vx.klass = VClass::Element;
    vx.name = el.name;
    vx.device = &g.owned_devices->back();
    vx.comp.kind = ElementKind::Leaf;
    vx.comp.members = {el.name};
    vx.comp.device_count = 1;
    g.vertices.push_back(vx);
    g.adj.emplace_back();
    g.element_index[el.name] = vx.id;
  }
  for (const auto& [name, supply] : nets) {
    Vertex vx;
    vx.id = (VertexId)g.vertices.size();
    vx.klass = VClass::Net;
    vx.name = name;
    vx.is_supply = supply;
    g.vertices.push_back(vx);
    g.adj.emplace_back();
    g.net_index[name] = vx.id;
  }
  for (const auto& [ei, ni, bits] : edges) {
    VertexId e = g.element_index.at(elems[(size_t)ei].name);
    VertexId n = g.net_index.at(nets[(size_t)ni].first);
    Edge fwd;
    fwd.to = n;
    fwd.label.bits = (uint8_t)bits;
    g.adj[(size_t)e].push_back(fwd);
    Edge back = fwd;
    back.to = e;
    g.adj[(size_t)n].push_back(back);
  }
  g.finalize();
  return g;
}

FlatGraph FlatGraph::from_circuit_graph(const CircuitGraph& g) {
  FlatGraph f;
  std::map<VertexId, int> elem_idx, net_idx;
  for (const auto& vx : g.vertices) {
    if (vx.klass == VClass::Element) {
      if (vx.comp.kind != ElementKind::Leaf)
        throw std::runtime_error("FlatGraph requires leaf-only graphs");
      elem_idx[vx.id] = (int)f.elems.size();
      f.elems.push_back({vx.name, vx.device->kind, vx.device->params});
    } else {
      net_idx[vx.id] = (int)f.nets.size();
      f.nets.emplace_back(vx.name, vx.is_supply);
    }
  }
  for (const auto& vx : g.vertices) {
    if (vx.klass != VClass::Element) continue;
    for (const auto& e : g.adj[(size_t)vx.id])
      f.edges.push_back({elem_idx.at(vx.id), net_idx.at(e.to), (int)e.label.bits});
  }
  std::sort(f.edges.begin(), f.edges.end());
  return f;
}

namespace {

nlohmann::json flat_to_json(const FlatGraph& f) {
  nlohmann::json j;
  j["elems"] = nlohmann::json::array();
  for (const auto& el : f.elems)
    j["elems"].push_back({{"name", el.name}, {"kind", to_string(el.kind)}, {"params", el.params}});
  j["nets"] = nlohmann::json::array();
  for (const auto& [name, supply] : f.nets)
    j["nets"].push_back({{"name", name}, {"supply", supply}});
  j["edges"] = nlohmann::json::array();
  for (const auto& [e, n, bits] : f.edges) j["edges"].push_back({e, n, bits});
  return j;
}

DeviceKind kind_from(const std::string& s) {
  if (s == "nmos") return DeviceKind::Nmos;
  if (s == "pmos") return DeviceKind::Pmos;
  if (s == "res") return DeviceKind::Res;
  if (s == "cap") return DeviceKind::Cap;
  if (s == "ind") return DeviceKind::Ind;
  throw std::runtime_error("bad device kind '" + s + "' in corpus");
}

FlatGraph flat_from_json(const nlohmann::json& j) {
  FlatGraph f;
  for (const auto& el : j.at("elems")) {
    FlatGraph::Elem e;
    e.name = el.at("name").get<std::string>();
    e.kind = kind_from(el.at("kind").get<std::string>());
    for (const auto& [k, v] : el.at("params").items()) e.params[k] = v.get<double>();
    f.elems.push_back(e);
  }
  for (const auto& n : j.at("nets"))
    f.nets.emplace_back(n.at("name").get<std::string>(), n.at("supply").get<bool>());
  for (const auto& e : j.at("edges"))
    f.edges.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<int>()});
  return f;
}

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(uint64_t seed) : eng(seed) {}
  int below(int n) { return (int)(eng() % (uint64_t)n); }
};

bool has_edge(const FlatGraph& g, int e, int n) {
  for (const auto& [ei, ni, bits] : g.edges)
    if (ei == e && ni == n) return true;
  return false;
}

bool is_mos(DeviceKind k) { return k == DeviceKind::Nmos || k == DeviceKind::Pmos; }

}  // namespace

std::string FlatGraph::to_json() const { return flat_to_json(*this).dump(); }

FlatGraph FlatGraph::from_json(const std::string& text) {
  return flat_from_json(nlohmann::json::parse(text));
}

std::pair<FlatGraph, std::vector<std::string>> perturb(const FlatGraph& g0, int k, uint64_t seed,
                                                       PerturbOps ops, std::string* warning) {
  FlatGraph g = g0;
  std::vector<std::string> script;
  Rng rng(seed);
  int applied = 0;
  int attempts_left = 40 * std::max(1, k);
  int synth_id = 0;

  auto apply_one = [&]() -> bool {
    int op = ops == PerturbOps::LabelSwapsOnly ? 2 : rng.below(5);
    switch (op) {
      case 0: {  // edge move
        if (g.edges.empty() || g.nets.size() < 2) return false;
        int ei = rng.below((int)g.edges.size());
        int nn = rng.below((int)g.nets.size());
        auto [el, old_n, bits] = g.edges[(size_t)ei];
        if (nn == old_n || has_edge(g, el, nn)) return false;
        g.edges[(size_t)ei] = {el, nn, bits};
        script.push_back("edge_move " + g.elems[(size_t)el].name + " " +
                         g.nets[(size_t)old_n].first + "->" + g.nets[(size_t)nn].first);
        return true;
      }
      case 1: {  // vertex relabel within the arity class
        if (g.elems.empty()) return false;
        int ei = rng.below((int)g.elems.size());
        auto& el = g.elems[(size_t)ei];
        DeviceKind nk = el.kind;
        if (is_mos(el.kind))
          nk = el.kind == DeviceKind::Nmos ? DeviceKind::Pmos : DeviceKind::Nmos;
        else if (el.kind == DeviceKind::Res)
          nk = DeviceKind::Cap;
        else if (el.kind == DeviceKind::Cap)
          nk = rng.below(2) ? DeviceKind::Res : DeviceKind::Ind;
        else if (el.kind == DeviceKind::Ind)
          nk = DeviceKind::Res;
        else
          return false;
        script.push_back("relabel " + el.name + " " + to_string(el.kind) + "->" + to_string(nk));
        el.kind = nk;
        return true;
      }
      case 2: {  // edge label change (terminal swap)
        std::vector<int> labeled;
        for (size_t i = 0; i < g.edges.size(); ++i)
          if (g.edges[i][2] != 0) labeled.push_back((int)i);
        if (labeled.empty()) return false;
        int ei = labeled[(size_t)rng.below((int)labeled.size())];
        int old_bits = g.edges[(size_t)ei][2];
        int nb = 1 + rng.below(7);
        if (nb == old_bits) return false;
        g.edges[(size_t)ei][2] = nb;
        script.push_back("edge_relabel " + g.elems[(size_t)g.edges[(size_t)ei][0]].name + " " +
                         std::to_string(old_bits) + "->" + std::to_string(nb));
        return true;
      }
      case 3: {  // vertex add: passive across two nets
        if (g.nets.size() < 2) return false;
        int a = rng.below((int)g.nets.size());
        int b = rng.below((int)g.nets.size());
        if (a == b) return false;
        FlatGraph::Elem el;
        el.name = "SYN" + std::to_string(++synth_id);
        el.kind = rng.below(2) ? DeviceKind::Res : DeviceKind::Cap;
        el.params[el.kind == DeviceKind::Res ? "r" : "c"] = 1.0;
        g.elems.push_back(el);
        int ei = (int)g.elems.size() - 1;
        g.edges.push_back({ei, a, 0});
        g.edges.push_back({ei, b, 0});
        script.push_back("vertex_add " + el.name);
        return true;
      }
      default: {  // vertex remove
        if (g.elems.size() < 2) return false;
        int ei = rng.below((int)g.elems.size());
        int deg = 0;
        for (const auto& e : g.edges)
          if (e[0] == ei) ++deg;
        if (deg > 3) return false;
        script.push_back("vertex_remove " + g.elems[(size_t)ei].name);
        g.elems.erase(g.elems.begin() + ei);
        std::vector<std::array<int, 3>> kept;
        for (auto e : g.edges) {
          if (e[0] == ei) continue;
          if (e[0] > ei) e[0] -= 1;
          kept.push_back(e);
        }
        g.edges = kept;
        return true;
      }
    }
  };

  while (applied < k && attempts_left > 0) {
    --attempts_left;
    if (apply_one()) ++applied;
  }
  if (applied < k && warning)
    *warning = "perturb: applied " + std::to_string(applied) + " of " + std::to_string(k) +
               " requested edits";
  std::sort(g.edges.begin(), g.edges.end());
  return {g, script};
}

FlatGraph random_bipartite(int elems, int nets, uint64_t seed) {
  Rng rng(seed);
  FlatGraph g;
  for (int n = 0; n < nets; ++n) g.nets.emplace_back("n" + std::to_string(n), false);
  for (int e = 0; e < elems; ++e) {
    FlatGraph::Elem el;
    el.name = "E" + std::to_string(e);
    int pick = rng.below(5);
    el.kind = pick == 0   ? DeviceKind::Nmos
              : pick == 1 ? DeviceKind::Pmos
              : pick == 2 ? DeviceKind::Res
              : pick == 3 ? DeviceKind::Cap
                          : DeviceKind::Ind;
    if (is_mos(el.kind)) {
      el.params["w"] = 1e-6;
      el.params["l"] = 1e-7;
    } else {
      el.params[el.kind == DeviceKind::Res ? "r" : el.kind == DeviceKind::Cap ? "c" : "l"] = 1.0;
    }
    g.elems.push_back(el);
    int ei = (int)g.elems.size() - 1;
    if (is_mos(el.kind)) {
      // g, s, d to three (not necessarily distinct) nets; ties merge labels
      int gates[3] = {rng.below(nets), rng.below(nets), rng.below(nets)};
      uint8_t bits[3] = {EdgeLabel::kGate, EdgeLabel::kSource, EdgeLabel::kDrain};
      for (int t = 0; t < 3; ++t) {
        bool merged = false;
        for (auto& e : g.edges)
          if (e[0] == ei && e[1] == gates[t]) {
            e[2] |= bits[t];
            merged = true;
          }
        if (!merged) g.edges.push_back({ei, gates[t], bits[t]});
      }
    } else {
      int a = rng.below(nets);
      int b = rng.below(nets);
      if (a == b) b = (b + 1) % nets;
      g.edges.push_back({ei, a, 0});
      g.edges.push_back({ei, b, 0});
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

int scaled_train_count(int n, int ratio_train, int ratio_test) {
  double frac = (double)ratio_train / (double)(ratio_train + ratio_test);
  return (int)std::lround(frac * n);
}

TrainingSet build_corpus(const std::vector<FlatGraph>& bases, int count, uint64_t seed,
                         const CorpusOptions& opts, std::vector<std::string>* log) {
  TrainingSet set;
  if (bases.empty() || count <= 0) return set;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const FlatGraph& base = bases[(size_t)(i % (int)bases.size())];
    uint64_t pair_seed = seed * 1000003ull + (uint64_t)i;
    int k = (int)(pair_seed % (uint64_t)(opts.max_edits + 1));
    std::string warn;
    auto [pert, script] = perturb(base, k, pair_seed, opts.ops, &warn);
    if (!warn.empty() && log) log->push_back("pair " + std::to_string(i) + ": " + warn);

    CircuitGraph cg1 = base.to_circuit_graph();
    CircuitGraph cg2 = pert.to_circuit_graph();
    GedOptions gopts;
    gopts.node_budget = opts.ged_budget;
    // A perturbation script bounds the distance from above.
    int script_ub = 0;
    for (const auto& s : script) {
      if (s.rfind("edge_move", 0) == 0)
        script_ub += 2;
      else if (s.rfind("vertex_add", 0) == 0)
        script_ub += 3;
      else if (s.rfind("vertex_remove", 0) == 0)
        script_ub += 4;
      else
        script_ub += 1;
    }
    gopts.init_upper = script_ub;
    GedResult res = ged_exact(cg1, cg2, gopts);
    if (!res.exact) {
      if (log) log->push_back("pair " + std::to_string(i) + ": labeling budget exceeded, dropped");
      continue;
    }
    PairRecord rec;
    rec.id = "p" + std::to_string(i);
    rec.g1 = base;
    rec.g2 = pert;
    rec.ged = res.ged;
    rec.dist = normalized_dist(res.ged, cg1, cg2);
    rec.gs = opts.bins.to_similarity(rec.dist);
    rec.seed = pair_seed;
    rec.edit_script = script;
    set.records.push_back(std::move(rec));
  }
  // Deterministic shuffled split at the spec ratio.
  std::vector<size_t> idx(set.records.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 shuffler(seed ^ 0x5eed5eed5eed5eedull);
  for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[shuffler() % i]);
  int train_n = scaled_train_count((int)idx.size(), opts.ratio_train, opts.ratio_test);
  for (size_t i = 0; i < idx.size(); ++i)
    ((int)i < train_n ? set.train_idx : set.test_idx).push_back(idx[i]);
  std::sort(set.train_idx.begin(), set.train_idx.end());
  std::sort(set.test_idx.begin(), set.test_idx.end());
  return set;
}

std::string corpus_to_jsonl(const TrainingSet& set) {
  std::ostringstream out;
  nlohmann::json header;
  header["schema"] = "symcon-corpus-v1";
  header["train_idx"] = set.train_idx;
  header["test_idx"] = set.test_idx;
  out << header.dump() << "\n";
  for (const auto& rec : set.records) {
    nlohmann::json j;
    j["id"] = rec.id;
    j["g1"] = flat_to_json(rec.g1);
    j["g2"] = flat_to_json(rec.g2);
    j["ged"] = rec.ged;
    j["dist"] = rec.dist;
    j["gs"] = rec.gs;
    j["provenance"] = {{"seed", rec.seed}, {"script", rec.edit_script}};
    out << j.dump() << "\n";
  }
  return out.str();
}

TrainingSet corpus_from_jsonl(const std::string& text) {
  TrainingSet set;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (!header_seen) {
      if (j.value("schema", "") != "symcon-corpus-v1")
        throw std::runtime_error("corpus: missing or unsupported schema header");
      set.train_idx = j.at("train_idx").get<std::vector<size_t>>();
      set.test_idx = j.at("test_idx").get<std::vector<size_t>>();
      header_seen = true;
      continue;
    }
    PairRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.g1 = flat_from_json(j.at("g1"));
    rec.g2 = flat_from_json(j.at("g2"));
    rec.ged = j.at("ged").get<int>();
    rec.dist = j.at("dist").get<double>();
    rec.gs = j.at("gs").get<double>();
    rec.seed = j.at("provenance").at("seed").get<uint64_t>();
    rec.edit_script = j.at("provenance").at("script").get<std::vector<std::string>>();
    set.records.push_back(std::move(rec));
  }
  return set;
}

void save_corpus_file(const TrainingSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file '" + path + "'");
  out << corpus_to_jsonl(set);
}

TrainingSet load_corpus_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return corpus_from_jsonl(ss.str());
}

std::vector<ScoredPair> to_scored_pairs(const TrainingSet& set, bool test_split) {
  std::vector<ScoredPair> out;
  for (size_t i : test_split ? set.test_idx : set.train_idx) {
    const PairRecord& rec = set.records[i];
    ScoredPair sp;
    sp.g1 = rec.g1.to_circuit_graph(rec.id + "_a");
    sp.g2 = rec.g2.to_circuit_graph(rec.id + "_b");
    sp.gs = rec.gs;
    sp.id = rec.id;
    out.push_back(std::move(sp));
  }
  return out;
}

}  // namespace symcon
