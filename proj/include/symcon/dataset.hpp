#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "symcon/circuit_graph.hpp"
#include "symcon/ged_exact.hpp"
#include "symcon/ged_gnn.hpp"

namespace symcon {

// Editable flat view of a labeled bipartite graph, the unit the corpus
// generator perturbs and serializes.
struct FlatGraph {
  struct Elem {
    std::string name;
    DeviceKind kind = DeviceKind::Res;
    std::map<std::string, double> params;
  };
  std::vector<Elem> elems;
  std::vector<std::pair<std::string, bool>> nets;    // (name, is_supply)
  std::vector<std::array<int, 3>> edges;             // elem index, net index, label bits

  CircuitGraph to_circuit_graph(const std::string& scope = "synthetic") const;
  static FlatGraph from_circuit_graph(const CircuitGraph& g);
  std::string to_json() const;
  static FlatGraph from_json(const std::string& text);
};

struct PairRecord {
  std::string id;
  FlatGraph g1, g2;
  int ged = 0;
  double dist = 0;
  double gs = 0;
  uint64_t seed = 0;
  std::vector<std::string> edit_script;
};

struct TrainingSet {
  std::vector<PairRecord> records;
  std::vector<size_t> train_idx, test_idx;
};

enum class PerturbOps { All, LabelSwapsOnly };

// k random structure-preserving edits; bipartiteness holds by construction.
// GED(g, g') <= returned script cost, the exact value must be recomputed.
std::pair<FlatGraph, std::vector<std::string>> perturb(const FlatGraph& g, int k, uint64_t seed,
                                                       PerturbOps ops = PerturbOps::All,
                                                       std::string* warning = nullptr);

FlatGraph random_bipartite(int elems, int nets, uint64_t seed);

struct CorpusOptions {
  int max_edits = 6;
  PerturbOps ops = PerturbOps::All;
  SimilarityBins bins = SimilarityBins::defaults();
  long ged_budget = 20'000'000;
  // train:test split ratio, scaled to the corpus size by rounding.
  int ratio_train = 51;
  int ratio_test = 28;
};

// Deterministic function of (bases, count, seed, options). Pairs whose exact
// labeling exceeds the budget are dropped with a log entry.
TrainingSet build_corpus(const std::vector<FlatGraph>& bases, int count, uint64_t seed,
                         const CorpusOptions& opts, std::vector<std::string>* log = nullptr);

std::string corpus_to_jsonl(const TrainingSet& set);
TrainingSet corpus_from_jsonl(const std::string& text);
void save_corpus_file(const TrainingSet& set, const std::string& path);
TrainingSet load_corpus_file(const std::string& path);

std::vector<ScoredPair> to_scored_pairs(const TrainingSet& set, bool test_split);

// round(n * 51 / 79) with the spec's nearest-integer rule.
int scaled_train_count(int n, int ratio_train, int ratio_test);

}  // namespace symcon
