#include "symcon/ged_exact.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <map>
#include <stdexcept>

namespace symcon {

bool EditOp::operator<(const EditOp& o) const {
  if (kind != o.kind) return kind < o.kind;
  if (a != o.a) return a < o.a;
  return b < o.b;
}

const char* to_string(EditOp::Kind k) {
  switch (k) {
    case EditOp::VertexIns: return "vertex_ins";
    case EditOp::VertexDel: return "vertex_del";
    case EditOp::VertexRelabel: return "vertex_relabel";
    case EditOp::EdgeIns: return "edge_ins";
    case EditOp::EdgeDel: return "edge_del";
    case EditOp::EdgeRelabel: return "edge_relabel";
  }
  return "?";
}

namespace {

constexpr int kEps = -1;
constexpr int kNoEdge = -1;

// Compact form: vertex label ids and a dense edge matrix of label bits.
struct Flat {
  int n = 0;
  std::vector<int> vlabel;
  std::vector<std::string> names;
  std::vector<int8_t> edge;  // n*n, kNoEdge or bits 0..7
  std::vector<int> degree;

  int8_t e(int a, int b) const { return edge[(size_t)a * n + b]; }
};

int intern_label(std::map<std::string, int>& table, const std::string& key) {
  auto it = table.find(key);
  if (it != table.end()) return it->second;
  int id = (int)table.size();
  table[key] = id;
  return id;
}

std::string vertex_label_key(const CircuitGraph& g, const Vertex& v) {
  if (v.klass == VClass::Net) return "net";
  if (v.comp.kind == ElementKind::Leaf) return to_string(v.device->kind);
  if (v.comp.kind == ElementKind::Instance) return "inst";
  return "prim:" + v.comp.family;
  (void)g;
}

Flat flatten(const CircuitGraph& g, std::map<std::string, int>& labels) {
  Flat f;
  f.n = (int)g.size();
  f.vlabel.resize(f.n);
  f.names.resize(f.n);
  f.edge.assign((size_t)f.n * f.n, kNoEdge);
  f.degree.assign(f.n, 0);
  for (int i = 0; i < f.n; ++i) {
    f.vlabel[i] = intern_label(labels, vertex_label_key(g, g.v(i)));
    f.names[i] = g.v(i).name;
  }
  for (int i = 0; i < f.n; ++i)
    for (const auto& e : g.adj[(size_t)i]) {
      f.edge[(size_t)i * f.n + e.to] = (int8_t)e.label.bits;
      if (e.to > i) {
        ++f.degree[i];
        ++f.degree[e.to];
      }
    }
  return f;
}

// Order g1 vertices so each step decides as many edge costs as possible.
std::vector<int> search_order(const Flat& f) {
  std::vector<int> order;
  std::vector<char> used(f.n, 0);
  for (int step = 0; step < f.n; ++step) {
    int best = -1, best_links = -1, best_deg = -1;
    for (int v = 0; v < f.n; ++v) {
      if (used[v]) continue;
      int links = 0;
      for (int u : order)
        if (f.e(v, u) != kNoEdge) ++links;
      if (links > best_links || (links == best_links && f.degree[v] > best_deg)) {
        best = v;
        best_links = links;
        best_deg = f.degree[v];
      }
    }
    used[best] = 1;
    order.push_back(best);
  }
  return order;
}

struct Search {
  const Flat& a;
  const Flat& b;
  std::vector<int> order;
  std::vector<int> map_ab;   // a vertex -> b vertex or kEps
  std::vector<char> used_b;  // b vertex already an image
  int best = std::numeric_limits<int>::max();
  std::vector<int> best_map;
  long expanded = 0;
  long budget = 0;  // 0 = unlimited
  bool budget_hit = false;
  int stop_at = -1;  // decision mode: stop once a solution <= stop_at is found
  int nlabels = 0;
#ifndef NDEBUG
  std::vector<int> expanded_bounds;
#endif

  Search(const Flat& a, const Flat& b, int nlabels)
      : a(a), b(b), map_ab(a.n, kEps), used_b(b.n, 0), nlabels(nlabels) {
    order = search_order(a);
  }

  // Admissible bound from label histograms of the still-unassigned parts.
  int lower_bound(int depth) const {
    std::vector<int> v1(nlabels, 0), v2(nlabels, 0);
    for (int i = depth; i < (int)order.size(); ++i) ++v1[a.vlabel[order[i]]];
    for (int u = 0; u < b.n; ++u)
      if (!used_b[u]) ++v2[b.vlabel[u]];
    int matched = 0, n1 = 0, n2 = 0;
    for (int l = 0; l < nlabels; ++l) {
      matched += std::min(v1[l], v2[l]);
      n1 += v1[l];
      n2 += v2[l];
    }
    int hv = std::max(n1 - matched, n2 - matched);

    // Edges with at least one undecided endpoint, split by label (8 bit
    // patterns + neutral = 9 slots at most).
    std::vector<int> e1(9, 0), e2(9, 0);
    std::vector<char> decided_a(a.n, 0);
    for (int i = 0; i < depth; ++i) decided_a[order[i]] = 1;
    for (int x = 0; x < a.n; ++x)
      for (int y = x + 1; y < a.n; ++y)
        if (a.e(x, y) != kNoEdge && (!decided_a[x] || !decided_a[y])) ++e1[a.e(x, y) + 1];
    for (int x = 0; x < b.n; ++x)
      for (int y = x + 1; y < b.n; ++y)
        if (b.e(x, y) != kNoEdge && (!used_b[x] || !used_b[y])) ++e2[b.e(x, y) + 1];
    int em = 0, t1 = 0, t2 = 0;
    for (int l = 0; l < 9; ++l) {
      em += std::min(e1[l], e2[l]);
      t1 += e1[l];
      t2 += e2[l];
    }
    int he = std::max(t1 - em, t2 - em);
    return hv + he;
  }

  // Cost of assigning a-vertex v to image u (or kEps), given earlier pairs.
  int step_cost(int depth, int v, int u) const {
    int cost = 0;
    if (u == kEps) {
      cost += 1;  // vertex deletion
      for (int i = 0; i < depth; ++i) {
        int w = order[i];
        if (a.e(v, w) != kNoEdge) cost += 1;  // its decided edges go too
      }
      return cost;
    }
    if (a.vlabel[v] != b.vlabel[u]) cost += 1;
    for (int i = 0; i < depth; ++i) {
      int w = order[i];
      int wu = map_ab[w];
      int8_t ea = a.e(v, w);
      int8_t eb = wu == kEps ? (int8_t)kNoEdge : b.e(u, wu);
      if (ea != kNoEdge && eb != kNoEdge)
        cost += ea != eb ? 1 : 0;
      else if (ea != kNoEdge || eb != kNoEdge)
        cost += 1;
    }
    return cost;
  }

  // Everything left on the b side once all of a is assigned.
  int closing_cost() const {
    int cost = 0;
    for (int u = 0; u < b.n; ++u)
      if (!used_b[u]) cost += 1;
    for (int x = 0; x < b.n; ++x)
      for (int y = x + 1; y < b.n; ++y)
        if (b.e(x, y) != kNoEdge && (!used_b[x] || !used_b[y])) cost += 1;
    return cost;
  }

  void dfs(int depth, int g) {
    if (budget > 0 && expanded >= budget) {
      budget_hit = true;
      return;
    }
    if (stop_at >= 0 && best <= stop_at) return;
    ++expanded;
    if (depth == (int)order.size()) {
      int total = g + closing_cost();
      if (total < best) {
        best = total;
        best_map = map_ab;
      }
      return;
    }
#ifndef NDEBUG
    expanded_bounds.push_back(g + lower_bound(depth));
#endif
    int v = order[depth];
    struct Cand {
      int u;
      int cost;
      int degdiff;
    };
    std::vector<Cand> cands;
    cands.reserve(b.n + 1);
    for (int u = 0; u < b.n; ++u)
      if (!used_b[u])
        cands.push_back({u, step_cost(depth, v, u), std::abs(a.degree[v] - b.degree[u])});
    cands.push_back({kEps, step_cost(depth, v, kEps), a.degree[v]});
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
      return std::tie(x.cost, x.degdiff) < std::tie(y.cost, y.degdiff);
    });
    for (const auto& c : cands) {
      int ng = g + c.cost;
      if (ng >= best) continue;
      map_ab[v] = c.u;
      if (c.u != kEps) used_b[c.u] = 1;
      if (ng + lower_bound(depth + 1) < best) dfs(depth + 1, ng);
      if (c.u != kEps) used_b[c.u] = 0;
      map_ab[v] = kEps;
      if (budget > 0 && expanded >= budget) {
        budget_hit = true;
        return;
      }
      if (stop_at >= 0 && best <= stop_at) return;
    }
  }
};

std::string edge_name(const Flat& f, int x, int y) {
  return f.names[x] < f.names[y] ? f.names[x] + "|" + f.names[y] : f.names[y] + "|" + f.names[x];
}

std::vector<EditOp> path_from_mapping(const Flat& a, const Flat& b, const std::vector<int>& m) {
  std::vector<EditOp> ops;
  std::vector<int> rev(b.n, kEps);
  for (int v = 0; v < a.n; ++v) {
    if (m[v] == kEps)
      ops.push_back({EditOp::VertexDel, a.names[v], ""});
    else {
      rev[m[v]] = v;
      if (a.vlabel[v] != b.vlabel[m[v]])
        ops.push_back({EditOp::VertexRelabel, a.names[v], b.names[m[v]]});
    }
  }
  for (int u = 0; u < b.n; ++u)
    if (rev[u] == kEps) ops.push_back({EditOp::VertexIns, b.names[u], ""});
  for (int x = 0; x < a.n; ++x)
    for (int y = x + 1; y < a.n; ++y) {
      if (a.e(x, y) == kNoEdge) continue;
      int mx = m[x], my = m[y];
      int8_t eb = (mx == kEps || my == kEps) ? (int8_t)kNoEdge : b.e(mx, my);
      if (eb == kNoEdge)
        ops.push_back({EditOp::EdgeDel, edge_name(a, x, y), ""});
      else if (eb != a.e(x, y))
        ops.push_back({EditOp::EdgeRelabel, edge_name(a, x, y), edge_name(b, mx, my)});
    }
  for (int x = 0; x < b.n; ++x)
    for (int y = x + 1; y < b.n; ++y) {
      if (b.e(x, y) == kNoEdge) continue;
      int rx = rev[x], ry = rev[y];
      bool covered = rx != kEps && ry != kEps && a.e(rx, ry) != kNoEdge;
      if (!covered) ops.push_back({EditOp::EdgeIns, edge_name(b, x, y), ""});
    }
  std::sort(ops.begin(), ops.end());
  return ops;
}

}  // namespace

GedResult ged_exact(const CircuitGraph& g1, const CircuitGraph& g2, const GedOptions& opts) {
  if (opts.node_budget == 0 &&
      ((int)g1.size() > opts.size_limit || (int)g2.size() > opts.size_limit))
    throw std::runtime_error("ged_exact: graph exceeds size limit " +
                             std::to_string(opts.size_limit) +
                             " and no node budget was given");
  std::map<std::string, int> labels;
  Flat a = flatten(g1, labels);
  Flat b = flatten(g2, labels);
  Search s(a, b, (int)labels.size());
  s.budget = opts.node_budget;

  // Greedy descent seeds the upper bound.
  {
    Search greedy(a, b, (int)labels.size());
    int g = 0;
    for (int depth = 0; depth < (int)greedy.order.size(); ++depth) {
      int v = greedy.order[depth];
      int pick = kEps, pick_cost = greedy.step_cost(depth, v, kEps);
      int pick_dd = a.degree[v];
      for (int u = 0; u < b.n; ++u) {
        if (greedy.used_b[u]) continue;
        int c = greedy.step_cost(depth, v, u);
        int dd = std::abs(a.degree[v] - b.degree[u]);
        if (std::tie(c, dd) < std::tie(pick_cost, pick_dd)) {
          pick = u;
          pick_cost = c;
          pick_dd = dd;
        }
      }
      greedy.map_ab[v] = pick;
      if (pick != kEps) greedy.used_b[pick] = 1;
      g += pick_cost;
    }
    g += greedy.closing_cost();
    s.best = g;
    s.best_map = greedy.map_ab;
  }
  if (opts.init_upper >= 0 && opts.init_upper + 1 < s.best) s.best = opts.init_upper + 1;

  s.dfs(0, 0);

  GedResult r;
  r.ged = s.best;
  r.exact = !s.budget_hit;
  r.expanded = s.expanded;
#ifndef NDEBUG
  if (r.exact)
    for (int bound : s.expanded_bounds) assert(bound <= r.ged);
#endif
  if (opts.want_path) {
    if (s.best_map.empty() || (int)s.best_map.size() != a.n)
      throw std::runtime_error("ged_exact: no mapping available for path extraction");
    r.path = path_from_mapping(a, b, s.best_map);
    assert(!r.exact || (int)r.path.size() == r.ged);
  }
  return r;
}

std::optional<bool> ged_within(const CircuitGraph& g1, const CircuitGraph& g2, int k,
                               long node_budget, int* found) {
  std::map<std::string, int> labels;
  Flat a = flatten(g1, labels);
  Flat b = flatten(g2, labels);
  Search s(a, b, (int)labels.size());
  s.budget = node_budget;
  s.stop_at = k;
  s.best = k + 1;  // only interested in solutions <= k
  s.best_map.clear();
  s.dfs(0, 0);
  if (s.best <= k) {
    if (found) *found = s.best;
    return true;
  }
  if (s.budget_hit) return std::nullopt;
  return false;
}

double normalized_dist(int ged, const CircuitGraph& g1, const CircuitGraph& g2) {
  auto [v1, e1] = graph_size_counts(g1);
  auto [v2, e2] = graph_size_counts(g2);
  long denom = (long)v1 + e1 + v2 + e2;
  if (denom == 0) throw std::runtime_error("normalized_dist: both graphs are empty");
  return (double)ged / (double)denom;
}

std::pair<int, int> graph_size_counts(const CircuitGraph& g) {
  int edges = 0;
  for (const auto& vx : g.vertices)
    if (vx.klass == VClass::Element) edges += (int)g.adj[(size_t)vx.id].size();
  return {(int)g.size(), edges};
}

double SimilarityBins::to_similarity(double dist) const {
  size_t idx = 0;
  for (double e : edges)
    if (e < dist) ++idx;
  if (idx >= scores.size()) idx = scores.size() - 1;
  return scores[idx];
}

bool SimilarityBins::valid() const {
  if (edges.empty() || edges.size() != scores.size()) return false;
  if (edges[0] != 0.0) return false;
  for (size_t i = 1; i < edges.size(); ++i)
    if (edges[i] <= edges[i - 1]) return false;
  for (size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[i - 1]) return false;
  return scores[0] == 1.0;
}

SimilarityBins SimilarityBins::defaults() {
  return {{0.0, 0.05, 0.10, 0.20, 0.35}, {1.0, 0.75, 0.5, 0.25, 0.0}};
}

}  // namespace symcon
