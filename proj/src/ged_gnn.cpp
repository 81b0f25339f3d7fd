#include "symcon/ged_gnn.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace symcon {

namespace {

struct Rng {
  std::mt19937_64 eng;
  bool have_spare = false;
  double spare = 0;

  explicit Rng(uint64_t seed) : eng(seed) {}
  double uniform() { return (double)(eng() >> 11) * (1.0 / 9007199254740992.0); }
  // Box-Muller; avoids stdlib distribution differences.
  double normal() {
    if (have_spare) {
      have_spare = false;
      return spare;
    }
    double u1 = 0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare = r * std::sin(2.0 * M_PI * u2);
    have_spare = true;
    return r * std::cos(2.0 * M_PI * u2);
  }
};

Matrix random_matrix(int r, int c, double std, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.a) v = std * rng.normal();
  return m;
}

int category_of(const CircuitGraph& g, const Vertex& v) {
  if (v.klass == VClass::Net) return 0;
  if (v.comp.kind == ElementKind::Leaf) {
    switch (v.device->kind) {
      case DeviceKind::Nmos: return 1;
      case DeviceKind::Pmos: return 2;
      case DeviceKind::Res: return 3;
      case DeviceKind::Cap: return 4;
      case DeviceKind::Ind: return 5;
      default: return 6;
    }
  }
  if (v.comp.kind == ElementKind::Instance) return 6;
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : v.comp.family) {
    h ^= c;
    h *= 1099511628211ull;
  }
  (void)g;
  return 7 + (int)(h % 9);  // primitive families share slots 7..15
}

std::vector<int> canonical_order(const CircuitGraph& g) {
  std::vector<int> order(g.size());
  for (size_t i = 0; i < g.size(); ++i) order[i] = (int)i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return g.sort_key(a) < g.sort_key(b); });
  return order;
}

}  // namespace

GedModel init_model(uint64_t seed, bool use_edge_labels, const SimilarityBins& bins) {
  GedModel m;
  m.use_edge_labels = use_edge_labels;
  m.bins = bins;
  Rng rng(seed);
  m.w1.resize(3);
  for (int l = 0; l < 3; ++l) {
    double std = std::sqrt(1.0 / kGcnDims[l]);
    for (int t = 0; t < m.channels(); ++t)
      m.w1[l].push_back(random_matrix(kGcnDims[l], kGcnDims[l + 1], std, rng));
  }
  m.w2 = random_matrix(kEmbedDim, kEmbedDim, std::sqrt(1.0 / kEmbedDim), rng);
  for (int k = 0; k < kNtnSlices; ++k)
    m.w3.push_back(random_matrix(kEmbedDim, kEmbedDim, std::sqrt(1.0 / kEmbedDim), rng));
  m.v = random_matrix(kNtnSlices, 2 * kEmbedDim, std::sqrt(1.0 / (2 * kEmbedDim)), rng);
  m.b.assign(kNtnSlices, 0.0);
  for (double& x : m.b) x = 0.01 * rng.normal();
  m.f1 = random_matrix(kNtnSlices, kNtnSlices, std::sqrt(1.0 / kNtnSlices), rng);
  m.c1.assign(kNtnSlices, 0.0);
  for (double& x : m.c1) x = 0.01 * rng.normal();
  m.f2 = random_matrix(1, kNtnSlices, std::sqrt(1.0 / kNtnSlices), rng);
  m.c2 = 0.01 * rng.normal();
  return m;
}

std::vector<std::pair<std::string, Matrix*>> model_tensors(GedModel& m) {
  std::vector<std::pair<std::string, Matrix*>> out;
  for (size_t l = 0; l < m.w1.size(); ++l)
    for (size_t t = 0; t < m.w1[l].size(); ++t)
      out.push_back({"w1[" + std::to_string(l) + "][" + std::to_string(t) + "]", &m.w1[l][t]});
  out.push_back({"w2", &m.w2});
  for (size_t k = 0; k < m.w3.size(); ++k)
    out.push_back({"w3[" + std::to_string(k) + "]", &m.w3[k]});
  out.push_back({"v", &m.v});
  out.push_back({"f1", &m.f1});
  out.push_back({"f2", &m.f2});
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> model_vectors(GedModel& m) {
  return {{"b", &m.b}, {"c1", &m.c1}};
}

Matrix build_node_features(const CircuitGraph& g) {
  auto order = canonical_order(g);
  Matrix x((int)order.size(), kInputDim);
  for (size_t i = 0; i < order.size(); ++i) x((int)i, category_of(g, g.v(order[i]))) = 1.0;
  return x;
}

GraphEncoding encode_graph(const CircuitGraph& g, const GedModel& m) {
  GraphEncoding enc;
  auto order = canonical_order(g);
  enc.n = (int)order.size();
  enc.x0 = build_node_features(g);
  std::vector<int> pos(g.size());
  for (size_t i = 0; i < order.size(); ++i) pos[(size_t)order[i]] = (int)i;

  std::vector<double> deg(g.size(), 1.0);  // self loop
  for (const auto& vx : g.vertices) deg[(size_t)vx.id] += (double)g.adj[(size_t)vx.id].size();

  enc.agg.assign(m.use_edge_labels ? 5 : 1, {});
  for (size_t i = 0; i < g.size(); ++i)
    enc.agg[kChanSelf].push_back({(double)pos[i], (double)pos[i], 1.0 / deg[i]});
  for (const auto& vx : g.vertices) {
    if (vx.klass != VClass::Element) continue;
    for (const auto& e : g.adj[(size_t)vx.id]) {
      double co = 1.0 / std::sqrt(deg[(size_t)vx.id] * deg[(size_t)e.to]);
      int a = pos[(size_t)vx.id], b = pos[(size_t)e.to];
      auto both = [&](int chan) {
        enc.agg[chan].push_back({(double)a, (double)b, co});
        enc.agg[chan].push_back({(double)b, (double)a, co});
      };
      if (!m.use_edge_labels) {
        both(0);  // single plain-GCN channel, self loops included above
      } else if (e.label.bits == 0) {
        both(kChanNeutral);
      } else {
        if (e.label.bits & EdgeLabel::kGate) both(kChanG);
        if (e.label.bits & EdgeLabel::kSource) both(kChanS);
        if (e.label.bits & EdgeLabel::kDrain) both(kChanD);
      }
    }
  }
  for (auto& list : enc.agg)
    std::sort(list.begin(), list.end());  // fixed summation order
  return enc;
}

namespace {

Matrix aggregate(const std::vector<std::array<double, 3>>& agg, const Matrix& x, int n) {
  Matrix out(n, x.cols);
  for (const auto& [i, j, co] : agg) {
    int a = (int)i, b = (int)j;
    for (int k = 0; k < x.cols; ++k) out(a, k) += co * x(b, k);
  }
  return out;
}

struct LayerForward {
  Matrix x_in;
  std::vector<Matrix> ax;  // per channel: S_t * x_in
  Matrix z;                // pre-activation
};

struct GraphForward {
  GraphEncoding enc;
  std::vector<LayerForward> layers;
  Matrix x3;
  std::vector<double> mean, q, c;  // context intermediates
  std::vector<double> att;         // sigmoid(X_n . c)
  std::vector<double> h;
};

Matrix gcn_layer(const GraphEncoding& enc, const GedModel& m, int l, const Matrix& x,
                 LayerForward* keep) {
  Matrix z(enc.n, kGcnDims[l + 1]);
  std::vector<Matrix> ax;
  for (int t = 0; t < m.channels(); ++t) {
    Matrix a = aggregate(enc.agg[t], x, enc.n);
    Matrix zz = matmul(a, m.w1[l][t]);
    for (size_t i = 0; i < z.a.size(); ++i) z.a[i] += zz.a[i];
    if (keep) ax.push_back(std::move(a));
  }
  if (keep) {
    keep->x_in = x;
    keep->ax = std::move(ax);
    keep->z = z;
  }
  return relu(z);
}

GraphForward forward_graph(const CircuitGraph& g, const GedModel& m) {
  GraphForward f;
  f.enc = encode_graph(g, m);
  Matrix x = f.enc.x0;
  f.layers.resize(3);
  for (int l = 0; l < 3; ++l) x = gcn_layer(f.enc, m, l, x, &f.layers[l]);
  f.x3 = x;

  int n = f.enc.n, d = kEmbedDim;
  f.mean.assign(d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) f.mean[k] += f.x3(i, k);
  for (int k = 0; k < d; ++k) f.mean[k] /= (double)n;
  f.q.assign(d, 0.0);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) f.q[j] += f.mean[i] * m.w2(i, j);
  f.c.resize(d);
  for (int j = 0; j < d; ++j) f.c[j] = std::tanh(f.q[j]);
  f.att.resize(n);
  f.h.assign(d, 0.0);
  for (int i = 0; i < n; ++i) {
    double a = 0;
    for (int k = 0; k < d; ++k) a += f.x3(i, k) * f.c[k];
    f.att[i] = sigmoid(a);
    for (int k = 0; k < d; ++k) f.h[k] += f.att[i] * f.x3(i, k);
  }
  return f;
}

struct PairForward {
  std::vector<double> z, gvec, t1, u;
  double y = 0, ps = 0;
};

PairForward forward_pair(const std::vector<double>& hi, const std::vector<double>& hj,
                         const GedModel& m) {
  PairForward p;
  int d = kEmbedDim, K = kNtnSlices;
  p.z.assign(K, 0.0);
  for (int k = 0; k < K; ++k) {
    double s = m.b[k];
    for (int a = 0; a < d; ++a) {
      double ha = hi[a];
      if (ha != 0.0)
        for (int bq = 0; bq < d; ++bq) s += ha * m.w3[k](a, bq) * hj[bq];
    }
    for (int a = 0; a < d; ++a) s += m.v(k, a) * hi[a] + m.v(k, d + a) * hj[a];
    p.z[k] = s;
  }
  p.gvec.resize(K);
  for (int k = 0; k < K; ++k) p.gvec[k] = p.z[k] > 0 ? p.z[k] : 0.0;
  p.t1.assign(K, 0.0);
  for (int j = 0; j < K; ++j) {
    double s = m.c1[j];
    for (int k = 0; k < K; ++k) s += m.f1(j, k) * p.gvec[k];
    p.t1[j] = s;
  }
  p.u.resize(K);
  for (int j = 0; j < K; ++j) p.u[j] = p.t1[j] > 0 ? p.t1[j] : 0.0;
  p.y = m.c2;
  for (int j = 0; j < K; ++j) p.y += m.f2(0, j) * p.u[j];
  p.ps = sigmoid(p.y);
  return p;
}

struct Accum {
  GedModel* grads;
};

// Backprop through one directed NTN+FC pass; adds dL/dh into dhi/dhj.
void backward_pair(const std::vector<double>& hi, const std::vector<double>& hj,
                   const PairForward& p, double dps, const GedModel& m, GedModel& gr,
                   std::vector<double>& dhi, std::vector<double>& dhj) {
  int d = kEmbedDim, K = kNtnSlices;
  double dy = dps * p.ps * (1.0 - p.ps);
  gr.c2 += dy;
  std::vector<double> du(K);
  for (int j = 0; j < K; ++j) {
    gr.f2(0, j) += dy * p.u[j];
    du[j] = m.f2(0, j) * dy;
  }
  std::vector<double> dt1(K);
  for (int j = 0; j < K; ++j) dt1[j] = p.t1[j] > 0 ? du[j] : 0.0;
  std::vector<double> dg(K, 0.0);
  for (int j = 0; j < K; ++j) {
    gr.c1[j] += dt1[j];
    for (int k = 0; k < K; ++k) {
      gr.f1(j, k) += dt1[j] * p.gvec[k];
      dg[k] += m.f1(j, k) * dt1[j];
    }
  }
  for (int k = 0; k < K; ++k) {
    double dz = p.z[k] > 0 ? dg[k] : 0.0;
    if (dz == 0.0) continue;
    gr.b[k] += dz;
    for (int a = 0; a < d; ++a) {
      gr.v(k, a) += dz * hi[a];
      gr.v(k, d + a) += dz * hj[a];
      dhi[a] += dz * m.v(k, a);
      dhj[a] += dz * m.v(k, d + a);
    }
    for (int a = 0; a < d; ++a) {
      double ha = hi[a];
      for (int bq = 0; bq < d; ++bq) {
        gr.w3[k](a, bq) += dz * ha * hj[bq];
        dhi[a] += dz * m.w3[k](a, bq) * hj[bq];
        dhj[bq] += dz * m.w3[k](a, bq) * ha;
      }
    }
  }
}

// Backprop dL/dh through attention, context and the GCN stack.
void backward_graph(const GraphForward& f, const std::vector<double>& dh, const GedModel& m,
                    GedModel& gr) {
  int n = f.enc.n, d = kEmbedDim;
  Matrix dx(n, d);
  std::vector<double> dc(d, 0.0);
  for (int i = 0; i < n; ++i) {
    double dot = 0;
    for (int k = 0; k < d; ++k) dot += dh[k] * f.x3(i, k);
    double sp = f.att[i] * (1.0 - f.att[i]);
    for (int k = 0; k < d; ++k) {
      dx(i, k) += f.att[i] * dh[k] + dot * sp * f.c[k];
      dc[k] += dot * sp * f.x3(i, k);
    }
  }
  std::vector<double> dq(d), dmean(d, 0.0);
  for (int j = 0; j < d; ++j) dq[j] = dc[j] * (1.0 - f.c[j] * f.c[j]);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      gr.w2(i, j) += f.mean[i] * dq[j];
      dmean[i] += m.w2(i, j) * dq[j];
    }
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) dx(i, k) += dmean[k] / (double)n;

  for (int l = 2; l >= 0; --l) {
    const LayerForward& lf = f.layers[l];
    Matrix dz = dx;
    for (size_t i = 0; i < dz.a.size(); ++i)
      if (lf.z.a[i] <= 0) dz.a[i] = 0.0;
    Matrix dx_in(n, kGcnDims[l]);
    for (int t = 0; t < m.channels(); ++t) {
      Matrix dw = matmul_tn(lf.ax[t], dz);
      add_scaled(gr.w1[l][t], dw, 1.0);
      Matrix back = matmul_nt(dz, m.w1[l][t]);  // dz * W^T
      Matrix agg_back = aggregate(f.enc.agg[t], back, n);
      for (size_t i = 0; i < dx_in.a.size(); ++i) dx_in.a[i] += agg_back.a[i];
    }
    dx = std::move(dx_in);
  }
}

GedModel zero_like(const GedModel& m) {
  GedModel z = m;
  for (auto& [name, t] : model_tensors(z)) std::fill(t->a.begin(), t->a.end(), 0.0);
  for (auto& [name, v] : model_vectors(z)) std::fill(v->begin(), v->end(), 0.0);
  z.c2 = 0.0;
  return z;
}

}  // namespace

Matrix gcn_forward(const GraphEncoding& enc, const GedModel& m) {
  Matrix x = enc.x0;
  for (int l = 0; l < 3; ++l) x = gcn_layer(enc, m, l, x, nullptr);
  return x;
}

std::vector<double> graph_context(const Matrix& x3, const GedModel& m) {
  int n = x3.rows, d = kEmbedDim;
  std::vector<double> mean(d, 0.0), c(d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) mean[k] += x3(i, k);
  for (int k = 0; k < d; ++k) mean[k] /= (double)n;
  for (int j = 0; j < d; ++j) {
    double s = 0;
    for (int i = 0; i < d; ++i) s += mean[i] * m.w2(i, j);
    c[j] = std::tanh(s);
  }
  return c;
}

std::vector<double> graph_embed_from(const Matrix& x3, const std::vector<double>& c) {
  int n = x3.rows, d = x3.cols;
  std::vector<double> h(d, 0.0);
  for (int i = 0; i < n; ++i) {
    double a = 0;
    for (int k = 0; k < d; ++k) a += x3(i, k) * c[k];
    double s = sigmoid(a);
    for (int k = 0; k < d; ++k) h[k] += s * x3(i, k);
  }
  return h;
}

std::vector<double> embed_graph(const CircuitGraph& g, const GedModel& m) {
  GraphEncoding enc = encode_graph(g, m);
  Matrix x3 = gcn_forward(enc, m);
  return graph_embed_from(x3, graph_context(x3, m));
}

std::vector<double> ntn_score(const std::vector<double>& hi, const std::vector<double>& hj,
                              const GedModel& m) {
  return forward_pair(hi, hj, m).gvec;
}

double predict_similarity(const std::vector<double>& hi, const std::vector<double>& hj,
                          const GedModel& m) {
  double ps = forward_pair(hi, hj, m).ps;
  if (m.symmetric_scoring) ps = 0.5 * (ps + forward_pair(hj, hi, m).ps);
  return ps;
}

double loss_on(const GedModel& m, const std::vector<ScoredPair>& pairs) {
  if (pairs.empty()) return 0.0;
  double total = 0;
  for (const auto& p : pairs) {
    std::vector<double> hi = embed_graph(p.g1, m);
    std::vector<double> hj = embed_graph(p.g2, m);
    double ps = predict_similarity(hi, hj, m);
    total += (ps - p.gs) * (ps - p.gs);
  }
  return total / (double)pairs.size();
}

std::pair<double, Gradients> loss_and_grads(const GedModel& m,
                                            const std::vector<ScoredPair>& pairs) {
  Gradients out{zero_like(m)};
  if (pairs.empty()) return {0.0, out};
  double total = 0;
  for (const auto& p : pairs) {
    GraphForward fi = forward_graph(p.g1, m);
    GraphForward fj = forward_graph(p.g2, m);
    PairForward ab = forward_pair(fi.h, fj.h, m);
    double ps = ab.ps;
    PairForward ba;
    if (m.symmetric_scoring) {
      ba = forward_pair(fj.h, fi.h, m);
      ps = 0.5 * (ab.ps + ba.ps);
    }
    total += (ps - p.gs) * (ps - p.gs);
    double dps = 2.0 * (ps - p.gs) / (double)pairs.size();
    std::vector<double> dhi(kEmbedDim, 0.0), dhj(kEmbedDim, 0.0);
    if (m.symmetric_scoring) {
      backward_pair(fi.h, fj.h, ab, dps * 0.5, m, out.g, dhi, dhj);
      backward_pair(fj.h, fi.h, ba, dps * 0.5, m, out.g, dhj, dhi);
    } else {
      backward_pair(fi.h, fj.h, ab, dps, m, out.g, dhi, dhj);
    }
    backward_graph(fi, dhi, m, out.g);
    backward_graph(fj, dhj, m, out.g);
  }
  if (!std::isfinite(total)) throw std::runtime_error("training loss is not finite");
  return {total / (double)pairs.size(), out};
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,test_loss\n";
  for (size_t e = 0; e < train_loss.size(); ++e) {
    out << e << ',';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", train_loss[e]);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", e < test_loss.size() ? test_loss[e] : 0.0);
    out << buf << '\n';
  }
  return out.str();
}

TrainLog train(GedModel& m, const std::vector<ScoredPair>& train_set,
               const std::vector<ScoredPair>& test_set, const TrainOptions& opts) {
  if (train_set.size() < 2)
    throw std::runtime_error("training requires at least two scored pairs");
  TrainLog log;
  for (int e = 0; e < opts.epochs; ++e) {
    auto [loss, grads] = loss_and_grads(m, train_set);
    log.train_loss.push_back(loss);
    log.test_loss.push_back(loss_on(m, test_set));
    auto mt = model_tensors(m);
    auto gt = model_tensors(grads.g);
    for (size_t i = 0; i < mt.size(); ++i) add_scaled(*mt[i].second, *gt[i].second, -opts.lr);
    auto mv = model_vectors(m);
    auto gv = model_vectors(grads.g);
    for (size_t i = 0; i < mv.size(); ++i)
      for (size_t j = 0; j < mv[i].second->size(); ++j)
        (*mv[i].second)[j] -= opts.lr * (*gv[i].second)[j];
    m.c2 -= opts.lr * grads.g.c2;
  }
  return log;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m((int)j.size(), j.empty() ? 0 : (int)j[0].size());
  for (int i = 0; i < m.rows; ++i)
    for (int k = 0; k < m.cols; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

}  // namespace

std::string save_model_json(const GedModel& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["use_edge_labels"] = m.use_edge_labels;
  j["symmetric_scoring"] = m.symmetric_scoring;
  j["dims"] = {kGcnDims[0], kGcnDims[1], kGcnDims[2], kGcnDims[3]};
  j["ntn_slices"] = kNtnSlices;
  nlohmann::json w1 = nlohmann::json::array();
  for (const auto& layer : m.w1) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& t : layer) per.push_back(matrix_json(t));
    w1.push_back(per);
  }
  j["w1"] = w1;
  j["w2"] = matrix_json(m.w2);
  nlohmann::json w3 = nlohmann::json::array();
  for (const auto& k : m.w3) w3.push_back(matrix_json(k));
  j["w3"] = w3;
  j["v"] = matrix_json(m.v);
  j["b"] = m.b;
  j["f1"] = matrix_json(m.f1);
  j["c1"] = m.c1;
  j["f2"] = matrix_json(m.f2);
  j["c2"] = m.c2;
  j["bins"] = {{"edges", m.bins.edges}, {"scores", m.bins.scores}};
  return j.dump(2) + "\n";
}

void save_model_file(const GedModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file '" + path + "'");
  out << save_model_json(m);
}

GedModel load_model_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("version", 0) != 1) throw std::runtime_error("unsupported model version");
  GedModel m;
  m.use_edge_labels = j.at("use_edge_labels").get<bool>();
  m.symmetric_scoring = j.value("symmetric_scoring", true);
  for (const auto& layer : j.at("w1")) {
    std::vector<Matrix> per;
    for (const auto& t : layer) per.push_back(matrix_from_json(t));
    m.w1.push_back(per);
  }
  m.w2 = matrix_from_json(j.at("w2"));
  for (const auto& k : j.at("w3")) m.w3.push_back(matrix_from_json(k));
  m.v = matrix_from_json(j.at("v"));
  m.b = j.at("b").get<std::vector<double>>();
  m.f1 = matrix_from_json(j.at("f1"));
  m.c1 = j.at("c1").get<std::vector<double>>();
  m.f2 = matrix_from_json(j.at("f2"));
  m.c2 = j.at("c2").get<double>();
  m.bins.edges = j.at("bins").at("edges").get<std::vector<double>>();
  m.bins.scores = j.at("bins").at("scores").get<std::vector<double>>();
  if (!m.bins.valid()) throw std::runtime_error("model carries invalid similarity bins");
  return m;
}

GedModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_model_json(ss.str());
}

uint64_t model_hash(const GedModel& m) {
  std::string s = save_model_json(m);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

GraphEmbedding embed_subblock(const CircuitGraph& g, const GedModel& m, EmbedCache* cache) {
  GraphEmbedding emb;
  emb.graph_hash = graph_hash(g);
  emb.model_version = model_hash(m);
  if (cache) {
    auto key = std::make_pair(emb.graph_hash, emb.model_version);
    auto it = cache->mem.find(key);
    if (it != cache->mem.end()) {
      ++cache->hits;
      emb.h = it->second;
      return emb;
    }
    if (!cache->dir.empty()) {
      std::string path = cache->dir + "/" + std::to_string(emb.graph_hash) + "-" +
                         std::to_string(emb.model_version) + ".json";
      std::ifstream in(path);
      if (in) {
        try {
          nlohmann::json j = nlohmann::json::parse(in);
          auto h = j.at("h").get<std::vector<double>>();
          if ((int)h.size() != kEmbedDim) throw std::runtime_error("bad length");
          ++cache->hits;
          cache->mem[key] = h;
          emb.h = h;
          return emb;
        } catch (const std::exception& e) {
          cache->warnings.push_back("corrupt cache entry " + path + ": " + e.what() +
                                    "; recomputing");
        }
      }
    }
    ++cache->misses;
  }
  emb.h = embed_graph(g, m);
  if (cache) {
    cache->mem[{emb.graph_hash, emb.model_version}] = emb.h;
    if (!cache->dir.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(cache->dir, ec);
      std::string path = cache->dir + "/" + std::to_string(emb.graph_hash) + "-" +
                         std::to_string(emb.model_version) + ".json";
      nlohmann::json j;
      j["h"] = emb.h;
      std::ofstream out(path);
      out << j.dump() << "\n";
    }
  }
  return emb;
}

double score_subblocks(const CircuitGraph& a, const CircuitGraph& b, const GedModel& m,
                       EmbedCache* cache) {
  GraphEmbedding ha = embed_subblock(a, m, cache);
  GraphEmbedding hb = embed_subblock(b, m, cache);
  return predict_similarity(ha.h, hb.h, m);
}

}  // namespace symcon
