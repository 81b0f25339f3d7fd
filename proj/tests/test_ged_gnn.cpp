#include "doctest.h"
#include "symcon/dataset.hpp"
#include "symcon/ged_gnn.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace symcon;

namespace {

FlatGraph path_graph() {
  // a -- R1 -- b
  FlatGraph f;
  f.elems.push_back({"R1", DeviceKind::Res, {{"r", 1.0}}});
  f.nets = {{"a", false}, {"b", false}};
  f.edges = {{0, 0, 0}, {0, 1, 0}};
  return f;
}

GedModel zeroed_model(bool labels = false) {
  GedModel m = init_model(7, labels);
  for (auto& [name, t] : model_tensors(m)) std::fill(t->a.begin(), t->a.end(), 0.0);
  for (auto& [name, v] : model_vectors(m)) std::fill(v->begin(), v->end(), 0.0);
  m.c2 = 0.0;
  return m;
}

std::vector<ScoredPair> tiny_corpus(uint64_t seed, int n, PerturbOps ops = PerturbOps::All) {
  std::vector<FlatGraph> bases = {random_bipartite(4, 3, seed), random_bipartite(5, 4, seed + 1)};
  CorpusOptions opts;
  opts.ops = ops;
  TrainingSet set = build_corpus(bases, n, seed, opts);
  std::vector<ScoredPair> out = to_scored_pairs(set, false);
  auto test = to_scored_pairs(set, true);
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

}  // namespace

TEST_CASE("node features are one-hot rows") {
  CircuitGraph g = random_bipartite(4, 3, 11).to_circuit_graph();
  Matrix x = build_node_features(g);
  CHECK(x.rows == (int)g.size());
  CHECK(x.cols == kInputDim);
  for (int i = 0; i < x.rows; ++i) {
    int nonzero = 0;
    for (int j = 0; j < x.cols; ++j)
      if (x(i, j) != 0.0) {
        ++nonzero;
        CHECK(x(i, j) == 1.0);
      }
    CHECK(nonzero == 1);
  }
}

TEST_CASE("gcn layer matches the hand-worked 3-vertex path") {
  // Path a--R1--b. Canonical order puts R1 first, then nets a, b.
  // deg(R1)=3, deg(a)=deg(b)=2 with self loops.
  CircuitGraph g = path_graph().to_circuit_graph();
  GedModel m = zeroed_model();
  // Layer 0 routes: res channel (col 3) -> out 0, net channel (col 0) -> out 1.
  m.w1[0][0](3, 0) = 1.0;
  m.w1[0][0](0, 1) = 1.0;
  // Later layers pass the two columns through.
  m.w1[1][0](0, 0) = 1.0;
  m.w1[1][0](1, 1) = 1.0;
  m.w1[2][0](0, 0) = 1.0;
  m.w1[2][0](1, 1) = 1.0;

  GraphEncoding enc = encode_graph(g, m);
  Matrix x3 = gcn_forward(enc, m);

  // Reference: explicit D^-1/2 (A+I) D^-1/2 propagation worked by hand.
  double r = 1.0 / std::sqrt(6.0);
  double s[3][3] = {{1.0 / 3.0, r, r}, {r, 0.5, 0.0}, {r, 0.0, 0.5}};
  // After layer 0 the two live columns are [res-channel, net-channel].
  double x[3][2] = {{1.0 / 3.0, 2 * r}, {r, 0.5}, {r, 0.5}};
  for (int layer = 0; layer < 2; ++layer) {  // layers 1 and 2 pass through
    double nx[3][2] = {};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int c = 0; c < 2; ++c) nx[i][c] += s[i][j] * x[j][c];
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 2; ++c) x[i][c] = nx[i][c];  // all positive, relu is identity
  }
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 2; ++c) CHECK(x3(i, c) == doctest::Approx(x[i][c]).epsilon(1e-12));
}

TEST_CASE("all-zero features stay zero through relu layers") {
  CircuitGraph g = path_graph().to_circuit_graph();
  GedModel m = init_model(3, false);
  GraphEncoding enc = encode_graph(g, m);
  enc.x0 = Matrix(enc.n, kInputDim);  // zeros
  Matrix x3 = gcn_forward(enc, m);
  for (double v : x3.a) CHECK(v == 0.0);
}

TEST_CASE("graph context: zero weights give zero, tanh bounds hold") {
  CircuitGraph g = path_graph().to_circuit_graph();
  GedModel m = init_model(5, false);
  GraphEncoding enc = encode_graph(g, m);
  Matrix x3 = gcn_forward(enc, m);

  GedModel zero = m;
  std::fill(zero.w2.a.begin(), zero.w2.a.end(), 0.0);
  for (double v : graph_context(x3, zero)) CHECK(v == 0.0);
  for (double v : graph_context(x3, m)) CHECK(std::fabs(v) < 1.0);
}

TEST_CASE("attention embedding: zero context halves the plain sum") {
  CircuitGraph g = path_graph().to_circuit_graph();
  GedModel m = init_model(5, false);
  Matrix x3 = gcn_forward(encode_graph(g, m), m);
  std::vector<double> zero_ctx(kEmbedDim, 0.0);
  std::vector<double> h = graph_embed_from(x3, zero_ctx);
  for (int k = 0; k < kEmbedDim; ++k) {
    double sum = 0;
    for (int i = 0; i < x3.rows; ++i) sum += x3(i, k);
    CHECK(h[(size_t)k] == doctest::Approx(0.5 * sum).epsilon(1e-12));
  }
}

TEST_CASE("ntn: zero parameters give zero, relu clamps negative bias") {
  GedModel m = zeroed_model();
  std::vector<double> hi(kEmbedDim, 0.3), hj(kEmbedDim, -0.2);
  auto g0 = ntn_score(hi, hj, m);
  for (double v : g0) CHECK(v == 0.0);
  m.b[2] = -1.0;
  auto g1 = ntn_score(hi, hj, m);
  CHECK(g1[2] == 0.0);
  m.b[3] = 0.7;
  CHECK(ntn_score(hi, hj, m)[3] == doctest::Approx(0.7));
}

TEST_CASE("ntn matches a hand-worked two-slice miniature") {
  GedModel m = zeroed_model();
  std::vector<double> hi(kEmbedDim, 0.0), hj(kEmbedDim, 0.0);
  hi[0] = 1.0;
  hi[1] = 2.0;
  hj[0] = 0.5;
  hj[1] = -1.0;
  // slice 0: bilinear picks h_i[0]*h_j[1] with weight 2, plus bias 0.25
  m.w3[0](0, 1) = 2.0;
  m.b[0] = 0.25;
  // slice 1: linear part only: 3*h_i[1] - 1*h_j[0]
  m.v(1, 1) = 3.0;
  m.v(1, kEmbedDim + 0) = -1.0;
  auto g = ntn_score(hi, hj, m);
  CHECK(g[0] == doctest::Approx(0.0));          // 2*1*(-1) + 0.25 = -1.75, clamped
  CHECK(g[1] == doctest::Approx(3 * 2.0 - 0.5));  // 5.5
  for (int k = 2; k < kNtnSlices; ++k) CHECK(g[(size_t)k] == 0.0);
}

TEST_CASE("predicted similarity stays in [0,1] and is symmetric") {
  GedModel m = init_model(17, false);
  CircuitGraph g1 = random_bipartite(5, 4, 2).to_circuit_graph("a");
  CircuitGraph g2 = random_bipartite(5, 4, 3).to_circuit_graph("b");
  auto hi = embed_graph(g1, m);
  auto hj = embed_graph(g2, m);
  double ps = predict_similarity(hi, hj, m);
  CHECK(ps >= 0.0);
  CHECK(ps <= 1.0);
  CHECK(ps == doctest::Approx(predict_similarity(hj, hi, m)).epsilon(1e-15));
}

TEST_CASE("embedding is invariant to vertex order permutations") {
  FlatGraph f = random_bipartite(5, 4, 23);
  FlatGraph shuffled = f;
  std::swap(shuffled.elems[0], shuffled.elems[3]);
  std::swap(shuffled.nets[0], shuffled.nets[2]);
  for (auto& [e, n, bits] : shuffled.edges) {
    e = e == 0 ? 3 : e == 3 ? 0 : e;
    n = n == 0 ? 2 : n == 2 ? 0 : n;
  }
  GedModel m = init_model(29, true);
  auto h1 = embed_graph(f.to_circuit_graph("x"), m);
  auto h2 = embed_graph(shuffled.to_circuit_graph("x"), m);
  REQUIRE(h1.size() == h2.size());
  for (size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == h2[i]);  // exact
}

TEST_CASE("analytic gradients match central finite differences") {
  auto pairs = tiny_corpus(41, 6);
  REQUIRE(pairs.size() >= 4);
  for (bool labels : {false, true}) {
    CAPTURE(labels);
    GedModel m = init_model(97, labels);
    auto [loss, grads] = loss_and_grads(m, pairs);
    const double eps = 1e-5;
    auto mt = model_tensors(m);
    auto gt = model_tensors(grads.g);
    std::mt19937_64 pick(123);
    int checked = 0;
    for (size_t t = 0; t < mt.size(); ++t) {
      Matrix* theta = mt[t].second;
      for (int rep = 0; rep < 3; ++rep) {
        size_t idx = pick() % theta->a.size();
        double save = theta->a[idx];
        theta->a[idx] = save + eps;
        double lp = loss_on(m, pairs);
        theta->a[idx] = save - eps;
        double lm = loss_on(m, pairs);
        theta->a[idx] = save;
        double numeric = (lp - lm) / (2 * eps);
        double analytic = gt[t].second->a[idx];
        double denom = std::max({1e-8, std::fabs(numeric), std::fabs(analytic)});
        CAPTURE(mt[t].first);
        CHECK(std::fabs(numeric - analytic) / denom < 1e-4);
        ++checked;
      }
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("training on a single repeated pair overfits it") {
  auto pairs = tiny_corpus(51, 4);
  std::vector<ScoredPair> one = {pairs[0], pairs[0]};
  GedModel m = init_model(7, false);
  TrainOptions topt;
  topt.lr = 0.4;
  topt.epochs = 400;
  train(m, one, {}, topt);
  double final_loss = loss_on(m, one);
  CHECK(final_loss < 1e-3);
}

TEST_CASE("fixed seed training is bit-identical across runs") {
  auto pairs = tiny_corpus(61, 6);
  TrainOptions topt;
  topt.lr = 0.05;
  topt.epochs = 12;
  GedModel m1 = init_model(5, false);
  GedModel m2 = init_model(5, false);
  TrainLog l1 = train(m1, pairs, pairs, topt);
  TrainLog l2 = train(m2, pairs, pairs, topt);
  CHECK(l1.train_loss == l2.train_loss);
  CHECK(l1.test_loss == l2.test_loss);
  CHECK(save_model_json(m1) == save_model_json(m2));
}

TEST_CASE("model json round trip preserves everything") {
  GedModel m = init_model(77, true);
  GedModel back = load_model_json(save_model_json(m));
  CHECK(save_model_json(back) == save_model_json(m));
  CHECK(model_hash(back) == model_hash(m));
}

TEST_CASE("embedding cache hits, version invalidation, corruption recovery") {
  CircuitGraph g = random_bipartite(5, 4, 91).to_circuit_graph("cached");
  GedModel m = init_model(3, false);
  EmbedCache cache;
  std::string dir = std::filesystem::temp_directory_path() / "symcon_cache_test";
  std::filesystem::remove_all(dir);
  cache.dir = dir;

  GraphEmbedding e1 = embed_subblock(g, m, &cache);
  CHECK(cache.misses == 1);
  GraphEmbedding e2 = embed_subblock(g, m, &cache);
  CHECK(cache.hits == 1);
  CHECK(e1.h == e2.h);

  // retrained model -> different version hash -> miss
  GedModel m2 = init_model(4, false);
  embed_subblock(g, m2, &cache);
  CHECK(cache.misses == 2);

  // corrupt the persistent entry: fresh cache object falls back to recompute
  EmbedCache cache2;
  cache2.dir = dir;
  std::string path = dir + "/" + std::to_string(e1.graph_hash) + "-" +
                     std::to_string(e1.model_version) + ".json";
  {
    std::ofstream out(path, std::ios::trunc);
    out << "{broken";
  }
  GraphEmbedding e3 = embed_subblock(g, m, &cache2);
  CHECK(e3.h == e1.h);
  CHECK(!cache2.warnings.empty());
  std::filesystem::remove_all(dir);
}
