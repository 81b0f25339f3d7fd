#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "symcon/circuit_graph.hpp"
#include "symcon/ged_exact.hpp"
#include "symcon/linalg.hpp"

namespace symcon {

// Aggregation channels. Label-blind mode uses one channel holding the full
// normalized adjacency with self loops (plain GCN); with edge labels the sum
// splits into self/neutral/g/s/d with separate learned transforms.
enum GcnChannel { kChanSelf = 0, kChanNeutral = 1, kChanG = 2, kChanS = 3, kChanD = 4 };

constexpr int kInputDim = 128;
constexpr int kGcnDims[4] = {kInputDim, 64, 32, 16};
constexpr int kEmbedDim = 16;
constexpr int kNtnSlices = 8;

struct GedModel {
  bool use_edge_labels = false;
  // w1[layer][channel]: 128x64, 64x32, 32x16 per channel.
  std::vector<std::vector<Matrix>> w1;
  Matrix w2;                // 16x16
  std::vector<Matrix> w3;   // K slices, 16x16
  Matrix v;                 // K x 32
  std::vector<double> b;    // K
  Matrix f1;                // 8x8
  std::vector<double> c1;   // 8
  Matrix f2;                // 1x8
  double c2 = 0;
  bool symmetric_scoring = true;
  SimilarityBins bins = SimilarityBins::defaults();

  int channels() const { return use_edge_labels ? 5 : 1; }
};

GedModel init_model(uint64_t seed, bool use_edge_labels,
                    const SimilarityBins& bins = SimilarityBins::defaults());

uint64_t model_hash(const GedModel& m);
std::string save_model_json(const GedModel& m);
void save_model_file(const GedModel& m, const std::string& path);
GedModel load_model_json(const std::string& text);
GedModel load_model_file(const std::string& path);

// One-hot vertex category features, zero-padded to 128 channels. Vertices
// are taken in canonical order so embeddings are permutation invariant.
Matrix build_node_features(const CircuitGraph& g);

// Normalized adjacency split into aggregation channels (see GcnChannel).
struct GraphEncoding {
  int n = 0;
  Matrix x0;
  // agg[channel] holds (i, j, coeff) triples of D^-1/2 (A+I) D^-1/2.
  std::vector<std::vector<std::array<double, 3>>> agg;
};
GraphEncoding encode_graph(const CircuitGraph& g, const GedModel& m);

Matrix gcn_forward(const GraphEncoding& enc, const GedModel& m);
std::vector<double> graph_context(const Matrix& x3, const GedModel& m);
std::vector<double> graph_embed_from(const Matrix& x3, const std::vector<double>& c);
std::vector<double> embed_graph(const CircuitGraph& g, const GedModel& m);

std::vector<double> ntn_score(const std::vector<double>& hi, const std::vector<double>& hj,
                              const GedModel& m);
double predict_similarity(const std::vector<double>& hi, const std::vector<double>& hj,
                          const GedModel& m);

struct ScoredPair {
  CircuitGraph g1, g2;
  double gs = 0;
  std::string id;
};

// All trainable tensors, same shapes as the model.
struct Gradients {
  GedModel g;  // reuse the container; values are gradients
};

double loss_on(const GedModel& m, const std::vector<ScoredPair>& pairs);
// Reverse-mode gradients of the mean squared error over the pair set.
std::pair<double, Gradients> loss_and_grads(const GedModel& m,
                                            const std::vector<ScoredPair>& pairs);

struct TrainOptions {
  double lr = 1e-3;
  int epochs = 300;
  uint64_t seed = 1;
};

struct TrainLog {
  std::vector<double> train_loss;
  std::vector<double> test_loss;
  std::string to_csv() const;
};

TrainLog train(GedModel& m, const std::vector<ScoredPair>& train_set,
               const std::vector<ScoredPair>& test_set, const TrainOptions& opts);

// Embedding cache: one entry per (graph hash, model hash). When a directory
// is set entries persist across runs; corrupt entries are recomputed with a
// warning.
struct EmbedCache {
  std::string dir;
  std::map<std::pair<uint64_t, uint64_t>, std::vector<double>> mem;
  long hits = 0;
  long misses = 0;
  std::vector<std::string> warnings;
};

struct GraphEmbedding {
  std::vector<double> h;
  uint64_t graph_hash = 0;
  uint64_t model_version = 0;
};

GraphEmbedding embed_subblock(const CircuitGraph& g, const GedModel& m, EmbedCache* cache);
double score_subblocks(const CircuitGraph& a, const CircuitGraph& b, const GedModel& m,
                       EmbedCache* cache);

// Enumerate every parameter tensor for generic iteration (train, gradcheck).
std::vector<std::pair<std::string, Matrix*>> model_tensors(GedModel& m);
std::vector<std::pair<std::string, std::vector<double>*>> model_vectors(GedModel& m);

}  // namespace symcon
