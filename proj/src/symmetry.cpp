#include "symcon/symmetry.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <functional>
#include <future>
#include <mutex>

#include "symcon/ged_gnn.hpp"

namespace symcon {

namespace {
bool close_rel(double a, double b, double tol = 1e-9) {
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}
std::mutex g_ctx_mutex;  // guards MatchContext caches under --threads
}  // namespace

bool AnalysisSummary::ports_symmetric(const std::string& a, const std::string& b) const {
  for (const auto& [x, y] : promoted_sym_ports)
    if ((x == a && y == b) || (x == b && y == a)) return true;
  return false;
}

const std::string* AnalysisSummary::partner_of(const std::string& p) const {
  for (const auto& [x, y] : promoted_sym_ports) {
    if (x == p) return &y;
    if (y == p) return &x;
  }
  return nullptr;
}

const CircuitGraph& MatchContext::def_graph(const std::string& subckt) {
  std::lock_guard<std::mutex> lock(g_ctx_mutex);
  auto it = def_graphs.find(subckt);
  if (it != def_graphs.end()) return it->second;
  const SubcktDef* def = design->find(subckt);
  if (!def) throw std::runtime_error("unknown subckt '" + subckt + "'");
  return def_graphs.emplace(subckt, build_graph(*def, *design, supply)).first->second;
}

namespace {

const std::pair<std::string, std::string>* pin_net(const CompositeInfo& c,
                                                   const std::string& port) {
  for (const auto& pn : c.pins)
    if (pn.first == port) return &pn;
  return nullptr;
}

// Distance cutoff equivalent to "similarity >= bound" under the given bins.
double max_dist_for_bound(const SimilarityBins& bins, double bound) {
  double dmax = -1;
  for (size_t i = 0; i < bins.edges.size(); ++i)
    if (bins.scores[i] >= bound) dmax = bins.edges[i];
  return dmax;
}

double approx_similarity(MatchContext& ctx, const CompositeInfo& a, const CompositeInfo& b,
                         bool& decided) {
  decided = true;
  const SymmetryOptions& opts = *ctx.opts;
  std::string ka = a.family, kb = b.family;
  if (ka > kb) std::swap(ka, kb);
  {
    std::lock_guard<std::mutex> lock(g_ctx_mutex);
    auto it = ctx.sim_cache.find({ka, kb});
    if (it != ctx.sim_cache.end()) return it->second;
  }
  const CircuitGraph& ga = ctx.def_graph(a.family);
  const CircuitGraph& gb = ctx.def_graph(b.family);
  double sim = 0.0;
  if (opts.approx == ApproxMode::Gnn) {
    if (!opts.model) throw std::runtime_error("approx gnn requires a model");
    sim = score_subblocks(ga, gb, *opts.model, opts.cache);
  } else {
    auto [v1, e1] = graph_size_counts(ga);
    auto [v2, e2] = graph_size_counts(gb);
    long denom = (long)v1 + e1 + v2 + e2;
    double dmax = max_dist_for_bound(opts.bins, opts.bound);
    int k = dmax < 0 ? -1 : (int)std::floor(dmax * (double)denom + 1e-12);
    if (k < 0) {
      sim = 0.0;
    } else {
      int found = -1;
      auto within = ged_within(ga, gb, k, opts.ged_budget, &found);
      if (!within.has_value()) {
        decided = false;
      } else if (*within) {
        sim = opts.bins.to_similarity((double)found / (double)denom);
      }
    }
  }
  if (decided) {
    std::lock_guard<std::mutex> lock(g_ctx_mutex);
    ctx.sim_cache[{ka, kb}] = sim;
  }
  return sim;
}

}  // namespace

MatchOutcome match_pair(const CircuitGraph& g, VertexId n1, const Edge* e1, VertexId n2,
                        const Edge* e2, MatchContext& ctx) {
  MatchOutcome no;
  const Vertex& a = g.v(n1);
  const Vertex& b = g.v(n2);
  const SymmetryOptions& opts = *ctx.opts;

  if (n1 == n2) {
    // A block adjacent to both probe nets: self-symmetry candidate.
    MatchOutcome self;
    self.matched = true;
    self.self = true;
    const CompositeInfo& c = a.comp;
    if (c.kind == ElementKind::Leaf) {
      DeviceKind k = a.device->kind;
      bool passive = k == DeviceKind::Res || k == DeviceKind::Cap || k == DeviceKind::Ind;
      if (passive) return self;
      if (e1 && e2 && e1->label == e2->label) return self;
      return no;
    }
    if (c.kind == ElementKind::Primitive) {
      if (c.family == "dp") {
        if (e1->role == PortRole::DpOut && e2->role == PortRole::DpOut) return self;
        if (e1->role == PortRole::DpGate && e2->role == PortRole::DpGate) return self;
        return no;
      }
      if (c.family == "mirror") {
        auto w_of = [&](const Edge* e) -> double {
          for (const auto& [net, w] : c.out_nets)
            if (net == g.v(e->to).name) return w;
          return -1;
        };
        if (e1->role == PortRole::MirrorOut && e2->role == PortRole::MirrorOut &&
            close_rel(w_of(e1), w_of(e2)))
          return self;
        // A single mirror straddles the axis when its two devices are 1:1.
        if (c.out_nets.size() == 1 &&
            ((e1->role == PortRole::MirrorRef && e2->role == PortRole::MirrorOut) ||
             (e1->role == PortRole::MirrorOut && e2->role == PortRole::MirrorRef)) &&
            close_rel(c.out_nets[0].second, c.unit_w))
          return self;
        return no;
      }
      for (const auto& [x, y] : c.sym_port_pairs) {
        if ((x == e1->port && y == e2->port) || (x == e2->port && y == e1->port)) return self;
      }
      return no;
    }
    // Instance: symmetric iff its own analysis promoted this port pair.
    if (c.summary && c.summary->ports_symmetric(e1->port, e2->port)) return self;
    return no;
  }

  if (a.comp.kind == ElementKind::Leaf && b.comp.kind == ElementKind::Leaf) {
    if (a.device->kind != b.device->kind) return no;
    if (e1 && e2 && !(e1->label == e2->label)) return no;
    if (a.device->params.size() != b.device->params.size()) return no;
    for (const auto& [k, v] : a.device->params) {
      auto it = b.device->params.find(k);
      if (it == b.device->params.end() || !close_rel(v, it->second)) return no;
    }
    MatchOutcome m;
    m.matched = true;
    return m;
  }

  if (a.comp.kind == ElementKind::Primitive && b.comp.kind == ElementKind::Primitive) {
    const CompositeInfo& ca = a.comp;
    const CompositeInfo& cb = b.comp;
    if (ca.family == cb.family && ca.polarity == cb.polarity &&
        close_rel(ca.unit_w, cb.unit_w) && close_rel(ca.unit_l, cb.unit_l) &&
        e1->role == e2->role && (e1->role != PortRole::Named || e1->port == e2->port)) {
      MatchOutcome m;
      m.matched = true;
      return m;
    }
    return no;
  }

  if (a.comp.kind == ElementKind::Instance && b.comp.kind == ElementKind::Instance) {
    if (a.comp.family == b.comp.family) {
      bool entry_ok = e1->port == e2->port;
      if (!entry_ok && a.comp.summary)
        entry_ok = a.comp.summary->ports_symmetric(e1->port, e2->port);
      if (entry_ok) {
        MatchOutcome m;
        m.matched = true;
        return m;
      }
      return no;
    }
    // Different definitions: approximate matching over the block graphs.
    if (opts.approx != ApproxMode::Off && e1->port == e2->port &&
        a.comp.device_count >= opts.min_composite_devices &&
        b.comp.device_count >= opts.min_composite_devices) {
      bool decided = true;
      double sim = approx_similarity(ctx, a.comp, b.comp, decided);
      if (decided && sim >= opts.bound) {
        MatchOutcome m;
        m.matched = true;
        m.kind = "approx";
        m.score = sim;
        return m;
      }
    }
    return no;
  }
  return no;
}

namespace {

enum class Status { Trivial, Converged, Deadend };

struct ExploreResult {
  Status status = Status::Trivial;
  int depth = 0;
  std::vector<Constraint> cs;
  std::vector<VertexId> side1, side2, on_axis;
  std::vector<std::pair<VertexId, VertexId>> probed;

  void absorb(const ExploreResult& o) {
    depth += o.depth;
    cs.insert(cs.end(), o.cs.begin(), o.cs.end());
    side1.insert(side1.end(), o.side1.begin(), o.side1.end());
    side2.insert(side2.end(), o.side2.begin(), o.side2.end());
    on_axis.insert(on_axis.end(), o.on_axis.begin(), o.on_axis.end());
    probed.insert(probed.end(), o.probed.begin(), o.probed.end());
  }
};

using ProbeList = std::vector<std::pair<VertexId, VertexId>>;

struct MatchedPair {
  VertexId a = kNoVertex, b = kNoVertex;
  const Edge* ea = nullptr;
  const Edge* eb = nullptr;
  MatchOutcome m;
};

struct Explorer {
  const CircuitGraph& g;
  MatchContext& ctx;
  std::string scope;
  int array_seq = 0;

  Explorer(const CircuitGraph& g, MatchContext& ctx) : g(g), ctx(ctx), scope(g.scope) {}

  std::string new_array_token() { return "@array:" + std::to_string(array_seq++); }

  bool net_boundary(const VisitedSet& visited, VertexId n) const {
    const Vertex& vx = g.v(n);
    return vx.is_supply || visited[(size_t)n] != 0;
  }

  std::string display(VertexId elem, VertexId via_net) const {
    const Vertex& vx = g.v(elem);
    if (vx.comp.kind == ElementKind::Leaf || via_net == kNoVertex) return vx.name;
    return vx.name + "/" + g.v(via_net).name;
  }

  Constraint make_pair_constraint(const MatchedPair& mp, VertexId s1, VertexId s2) const {
    Constraint c;
    c.type = ConstraintType::Pair;
    c.scope = scope;
    c.a = display(mp.a, s1);
    c.b = display(mp.b, s2);
    if (c.a > c.b) std::swap(c.a, c.b);
    c.kind = mp.m.kind;
    c.score = mp.m.score;
    return c;
  }

  // Port correspondences that continue the search through a matched pair.
  // Multiple alternatives arise when the pairing is ambiguous, e.g. a bank's
  // outputs against a single mirror's output, or a DP entered via its tail.
  std::vector<ProbeList> correspondences(const MatchedPair& mp) const {
    std::vector<ProbeList> alts;
    const Vertex& a = g.v(mp.a);
    const Vertex& b = g.v(mp.b);
    VertexId s1 = mp.ea ? mp.ea->to : kNoVertex;
    VertexId s2 = mp.eb ? mp.eb->to : kNoVertex;
    auto net_id = [&](const std::string& name) { return g.net(name); };

    if (mp.m.self) {
      const CompositeInfo& c = a.comp;
      ProbeList probes;
      if (c.kind == ElementKind::Primitive) {
        if (c.family == "dp") {
          if (mp.ea->role == PortRole::DpOut)
            probes.push_back({net_id(c.dp_sides[0].second), net_id(c.dp_sides[1].second)});
          else
            probes.push_back({net_id(c.dp_sides[0].first), net_id(c.dp_sides[1].first)});
        } else if (c.family != "mirror") {
          for (const auto& pn : c.pins) {
            if (pn.first == mp.ea->port || pn.first == mp.eb->port) continue;
            std::string partner = pn.first;
            for (const auto& [x, y] : c.sym_port_pairs) {
              if (x == pn.first) partner = y;
              if (y == pn.first) partner = x;
            }
            const auto* other = pin_net(c, partner);
            if (other && partner != pn.first)
              probes.push_back({net_id(pn.second), net_id(other->second)});
          }
        }
      } else if (c.kind == ElementKind::Instance && c.summary) {
        for (const auto& [x, y] : c.summary->promoted_sym_ports) {
          if ((x == mp.ea->port && y == mp.eb->port) || (x == mp.eb->port && y == mp.ea->port))
            continue;
          const auto* px = pin_net(c, x);
          const auto* py = pin_net(c, y);
          if (px && py) probes.push_back({net_id(px->second), net_id(py->second)});
        }
      }
      alts.push_back(probes);
      return alts;
    }

    const CompositeInfo& ca = a.comp;
    const CompositeInfo& cb = b.comp;

    if (ca.kind == ElementKind::Leaf && cb.kind == ElementKind::Leaf) {
      ProbeList probes;
      DeviceKind k = a.device->kind;
      if (k == DeviceKind::Nmos || k == DeviceKind::Pmos) {
        uint8_t entry = mp.ea ? mp.ea->label.bits : 0;
        for (uint8_t bit : {EdgeLabel::kGate, EdgeLabel::kSource, EdgeLabel::kDrain}) {
          if (entry & bit) continue;
          VertexId qa = kNoVertex, qb = kNoVertex;
          for (const auto& e : g.adj[(size_t)mp.a])
            if (e.label.bits & bit) qa = e.to;
          for (const auto& e : g.adj[(size_t)mp.b])
            if (e.label.bits & bit) qb = e.to;
          if (qa != kNoVertex && qb != kNoVertex) probes.push_back({qa, qb});
        }
      } else {
        VertexId qa = kNoVertex, qb = kNoVertex;
        for (const auto& e : g.adj[(size_t)mp.a])
          if (e.to != s1) qa = e.to;
        for (const auto& e : g.adj[(size_t)mp.b])
          if (e.to != s2) qb = e.to;
        if (qa != kNoVertex && qb != kNoVertex) probes.push_back({qa, qb});
      }
      alts.push_back(probes);
      return alts;
    }

    if (ca.kind == ElementKind::Primitive && cb.kind == ElementKind::Primitive) {
      if (ca.family == "dp") {
        auto push_orientation = [&](int ia, int ib) {
          ProbeList probes;
          probes.push_back({net_id(ca.dp_sides[ia].first), net_id(cb.dp_sides[ib].first)});
          probes.push_back(
              {net_id(ca.dp_sides[1 - ia].first), net_id(cb.dp_sides[1 - ib].first)});
          probes.push_back({net_id(ca.dp_sides[ia].second), net_id(cb.dp_sides[ib].second)});
          probes.push_back(
              {net_id(ca.dp_sides[1 - ia].second), net_id(cb.dp_sides[1 - ib].second)});
          probes.push_back({net_id(ca.src_net), net_id(cb.src_net)});
          alts.push_back(probes);
        };
        if (mp.ea->role == PortRole::DpSrc) {
          push_orientation(0, 0);
          push_orientation(0, 1);
        } else {
          auto side_of = [&](const CompositeInfo& c, VertexId net, bool gate) {
            for (int i = 0; i < 2; ++i) {
              const std::string& n = gate ? c.dp_sides[i].second : c.dp_sides[i].first;
              if (net_id(n) == net) return i;
            }
            return 0;
          };
          bool gate = mp.ea->role == PortRole::DpGate;
          push_orientation(side_of(ca, s1, gate), side_of(cb, s2, gate));
        }
        return alts;
      }
      if (ca.family == "mirror") {
        std::vector<std::string> outs_a, outs_b;
        for (const auto& [net, w] : ca.out_nets)
          if (net_id(net) != s1) outs_a.push_back(net);
        for (const auto& [net, w] : cb.out_nets)
          if (net_id(net) != s2) outs_b.push_back(net);
        ProbeList base;
        if (mp.ea->role != PortRole::MirrorRef)
          base.push_back({net_id(ca.ref_net), net_id(cb.ref_net)});
        base.push_back({net_id(ca.src_net), net_id(cb.src_net)});
        size_t na = outs_a.size(), nb = outs_b.size();
        if (na == 0 || nb == 0) {
          alts.push_back(base);
          return alts;
        }
        bool a_small = na <= nb;
        const auto& small = a_small ? outs_a : outs_b;
        const auto& large = a_small ? outs_b : outs_a;
        std::vector<size_t> pick(small.size());
        std::vector<char> used(large.size(), 0);
        std::function<void(size_t)> rec = [&](size_t i) {
          if (alts.size() >= 64) return;
          if (i == small.size()) {
            ProbeList probes = base;
            for (size_t j = 0; j < small.size(); ++j) {
              VertexId qs = net_id(small[j]);
              VertexId ql = net_id(large[pick[j]]);
              probes.push_back(a_small ? std::make_pair(qs, ql) : std::make_pair(ql, qs));
            }
            alts.push_back(probes);
            return;
          }
          for (size_t j = 0; j < large.size(); ++j) {
            if (used[j]) continue;
            used[j] = 1;
            pick[i] = j;
            rec(i + 1);
            used[j] = 0;
          }
        };
        rec(0);
        return alts;
      }
      ProbeList probes;  // generic primitives correspond by pattern port name
      for (const auto& pn : ca.pins) {
        if (net_id(pn.second) == s1) continue;
        const auto* other = pin_net(cb, pn.first);
        if (other) probes.push_back({net_id(pn.second), net_id(other->second)});
      }
      alts.push_back(probes);
      return alts;
    }

    if (ca.kind == ElementKind::Instance && cb.kind == ElementKind::Instance) {
      bool mirrored = mp.ea->port != mp.eb->port;
      ProbeList probes;
      for (const auto& pn : ca.pins) {
        if (pn.first == mp.ea->port) continue;
        std::string partner = pn.first;
        if (mirrored && ca.summary) {
          const std::string* p = ca.summary->partner_of(pn.first);
          if (p) partner = *p;
        }
        if (partner == mp.eb->port) continue;
        const auto* other = pin_net(cb, partner);
        if (other) probes.push_back({net_id(pn.second), net_id(other->second)});
      }
      alts.push_back(probes);
      return alts;
    }

    alts.push_back({});
    return alts;
  }

  ExploreResult process_pair(VisitedSet& visited, const MatchedPair& mp, VertexId s1,
                             VertexId s2) {
    ExploreResult r;
    r.status = Status::Converged;
    r.depth = 1;
    visited[(size_t)mp.a] = 1;
    visited[(size_t)mp.b] = 1;
    if (mp.m.self) {
      r.on_axis.push_back(mp.a);
      Constraint c;
      c.type = ConstraintType::SelfSym;
      c.scope = scope;
      c.a = g.v(mp.a).name;
      c.kind = mp.m.kind;
      c.score = mp.m.score;
      r.cs.push_back(c);
    } else {
      r.side1.push_back(mp.a);
      r.side2.push_back(mp.b);
      r.cs.push_back(make_pair_constraint(mp, s1, s2));
    }

    struct AltResult {
      bool ok = false;
      ExploreResult res;
      VisitedSet visited;
    };
    std::optional<AltResult> best;
    for (const auto& alt : correspondences(mp)) {
      AltResult ar;
      ar.visited = visited;
      int deadends = 0, converged = 0;
      for (const auto& [q1, q2] : alt) {
        ExploreResult sub = explore_nets(ar.visited, q1, q2);
        if (sub.status == Status::Deadend)
          ++deadends;
        else {
          if (sub.status == Status::Converged) ++converged;
          ar.res.absorb(sub);
        }
      }
      ar.ok = deadends == 0 || converged >= 1;
      bool better = !best || (ar.ok && !best->ok) ||
                    (ar.ok == best->ok && ar.res.depth > best->res.depth);
      if (better) best = std::move(ar);
    }
    if (best && !best->ok) {
      r.status = Status::Deadend;
      return r;
    }
    if (best) {
      visited = best->visited;
      r.absorb(best->res);
    }
    return r;
  }

  ExploreResult explore_nets(VisitedSet& visited, VertexId s1, VertexId s2) {
    ExploreResult r;
    if (s1 == kNoVertex || s2 == kNoVertex) return r;
    if (s1 == s2) return r;  // paths rejoined: an axis point, neutral end
    bool b1 = net_boundary(visited, s1);
    bool b2 = net_boundary(visited, s2);
    if (b1 && b2) return r;
    if (b1 != b2) {
      r.status = Status::Deadend;
      return r;
    }
    visited[(size_t)s1] = 1;
    visited[(size_t)s2] = 1;
    r.probed.push_back({s1, s2});

    auto n1 = neighbors(g, s1, visited);
    auto n2 = neighbors(g, s2, visited);
    if (n1.empty() && n2.empty()) return r;  // end case

    std::vector<MatchedPair> pairs;
    for (const auto& [a, ea] : n1)
      for (const auto& [b, eb] : n2) {
        MatchOutcome m = match_pair(g, a, ea, b, eb, ctx);
        if (m.matched) pairs.push_back({a, b, ea, eb, m});
      }
    if (pairs.empty()) {
      r.status = Status::Deadend;
      return r;
    }
    return process_clusters(visited, pairs, s1, s2, std::move(r));
  }

  // Self probe on one net: pairs over distinct neighbors only.
  ExploreResult explore_self_root(VisitedSet& visited, VertexId s) {
    ExploreResult r;
    if (net_boundary(visited, s)) return r;
    visited[(size_t)s] = 1;
    auto n = neighbors(g, s, visited);
    std::vector<MatchedPair> pairs;
    for (size_t i = 0; i < n.size(); ++i)
      for (size_t j = i + 1; j < n.size(); ++j) {
        MatchOutcome m = match_pair(g, n[i].first, n[i].second, n[j].first, n[j].second, ctx);
        if (m.matched) pairs.push_back({n[i].first, n[j].first, n[i].second, n[j].second, m});
      }
    if (pairs.empty()) return r;
    return process_clusters(visited, pairs, s, s, std::move(r));
  }

  ExploreResult process_clusters(VisitedSet& visited, const std::vector<MatchedPair>& pairs,
                                 VertexId s1, VertexId s2, ExploreResult r) {
    std::map<VertexId, VertexId> parent;
    std::function<VertexId(VertexId)> find = [&](VertexId x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& p : pairs) {
      if (!parent.count(p.a)) parent[p.a] = p.a;
      if (!parent.count(p.b)) parent[p.b] = p.b;
      parent[find(p.a)] = find(p.b);
    }
    std::map<VertexId, std::vector<const MatchedPair*>> clusters;
    for (const auto& p : pairs) clusters[find(p.a)].push_back(&p);

    std::vector<std::pair<std::string, VertexId>> order;
    for (const auto& [root, list] : clusters) {
      std::string key = g.sort_key(list.front()->a);
      for (const auto* p : list) {
        key = std::min(key, g.sort_key(p->a));
        key = std::min(key, g.sort_key(p->b));
      }
      order.push_back({key, root});
    }
    std::sort(order.begin(), order.end());

    int converged = 0, deadend = 0;
    for (const auto& [key, root] : order) {
      auto list = clusters[root];
      std::sort(list.begin(), list.end(), [&](const MatchedPair* x, const MatchedPair* y) {
        auto kx = std::make_pair(g.sort_key(x->a), g.sort_key(x->b));
        auto ky = std::make_pair(g.sort_key(y->a), g.sort_key(y->b));
        return kx < ky;
      });
      ExploreResult cres = process_cluster(visited, list, s1, s2);
      if (cres.status == Status::Converged) {
        ++converged;
        r.absorb(cres);
      } else if (cres.status == Status::Deadend) {
        ++deadend;
      }
    }
    r.status = converged > 0 ? Status::Converged
               : deadend > 0 ? Status::Deadend
                             : Status::Trivial;
    return r;
  }

  struct Branch {
    const MatchedPair* mp = nullptr;
    ExploreResult res;
    VisitedSet visited;
    bool ok = false;
  };

  ExploreResult process_cluster(VisitedSet& visited,
                                const std::vector<const MatchedPair*>& list, VertexId s1,
                                VertexId s2) {
    if (list.size() == 1) {
      VisitedSet copy = visited;
      ExploreResult res = process_pair(copy, *list[0], s1, s2);
      if (res.status != Status::Deadend) visited = copy;
      return res;
    }
    std::vector<Branch> branches;
    for (const auto* mp : list) {
      Branch br;
      br.mp = mp;
      br.visited = visited;
      br.res = process_pair(br.visited, *mp, s1, s2);
      br.ok = br.res.status != Status::Deadend;
      branches.push_back(std::move(br));
    }
    std::vector<const Branch*> valid;
    for (const auto& br : branches)
      if (br.ok) valid.push_back(&br);

    if (valid.empty()) {
      ExploreResult out;
      out.status = Status::Deadend;
      return out;
    }
    if (valid.size() == 1) {
      const Branch* only = valid[0];
      visited = only->visited;
      return only->res;
    }
    return build_arrays(visited, valid, s1, s2);
  }

  // CreateArray: collect the repeated structures rooted at the probe nets.
  // Probe origins adjacent to the root that match a representative member are
  // pulled in as members too.
  ExploreResult build_arrays(VisitedSet& visited, const std::vector<const Branch*>& valid,
                             VertexId s1, VertexId s2) {
    ExploreResult out;
    out.status = Status::Converged;

    // A member's repeated structure is what EVERY cross exploration reaches
    // from it; shared context (e.g. ladder chain links matched across two
    // members) drops out in the intersection.
    std::map<VertexId, std::vector<std::set<VertexId>>> floods;
    std::map<VertexId, std::set<VertexId>> diagonal_flood;
    std::set<VertexId> left, right;
    struct PairInfo {
      std::string kind;
      double score;
    };
    std::map<std::pair<VertexId, VertexId>, PairInfo> valid_pairs;
    auto record_flood = [&](VertexId m, const std::vector<VertexId>& side) {
      std::set<VertexId> f(side.begin(), side.end());
      f.insert(m);
      floods[m].push_back(std::move(f));
    };
    for (const Branch* br : valid) {
      VertexId a = br->mp->a, b = br->mp->b;
      valid_pairs[{a, b}] = {br->mp->m.kind, br->mp->m.score};
      out.depth += br->res.depth;
      for (size_t i = 0; i < visited.size(); ++i) visited[i] |= br->visited[i];
      out.probed.insert(out.probed.end(), br->res.probed.begin(), br->res.probed.end());
      if (br->mp->m.self) {
        left.insert(a);
        right.insert(a);
        auto& df = diagonal_flood[a];
        df.insert(a);
        for (VertexId v : br->res.on_axis) df.insert(v);
        for (VertexId v : br->res.side1) df.insert(v);
        for (VertexId v : br->res.side2) df.insert(v);
      } else {
        left.insert(a);
        right.insert(b);
        record_flood(a, br->res.side1);
        record_flood(b, br->res.side2);
      }
    }
    std::map<VertexId, std::set<VertexId>> structure;
    for (VertexId m : left) structure[m];
    for (VertexId m : right) structure[m];
    for (auto& [m, st] : structure) {
      auto it = floods.find(m);
      if (it == floods.end() || it->second.empty()) {
        st = diagonal_flood.count(m) ? diagonal_flood[m] : std::set<VertexId>{m};
        continue;
      }
      st = it->second.front();
      for (size_t i = 1; i < it->second.size(); ++i) {
        std::set<VertexId> inter;
        std::set_intersection(st.begin(), st.end(), it->second[i].begin(), it->second[i].end(),
                              std::inserter(inter, inter.begin()));
        st = std::move(inter);
      }
      st.insert(m);
    }

    bool single = left == right;
    if (!single) {
      std::set<VertexId> inter;
      std::set_intersection(left.begin(), left.end(), right.begin(), right.end(),
                            std::inserter(inter, inter.begin()));
      if (!inter.empty()) {  // partially overlapping sides: merge into one array
        left.insert(right.begin(), right.end());
        right = left;
        single = true;
      }
    }

    // cand sits on `root`; test it against a representative of the opposite
    // side, explored from the original probe roots.
    auto try_include = [&](VertexId cand, VertexId root, VertexId rep,
                           VertexId other_root) -> std::optional<ExploreResult> {
      const Edge* ce = edge_between(g, cand, root);
      const Edge* re = edge_between(g, rep, other_root);
      if (!ce || !re) return std::nullopt;
      MatchOutcome m = match_pair(g, cand, ce, rep, re, ctx);
      if (!m.matched || m.self) return std::nullopt;
      VisitedSet copy = visited;
      copy[(size_t)cand] = 0;
      copy[(size_t)rep] = 0;
      MatchedPair mp{cand, rep, ce, re, m};
      ExploreResult res = process_pair(copy, mp, root, other_root);
      if (res.status == Status::Deadend) return std::nullopt;
      valid_pairs[{cand, rep}] = {m.kind, m.score};
      structure[cand].insert(cand);
      for (VertexId v : res.side1) structure[cand].insert(v);
      for (size_t i = 0; i < visited.size(); ++i) visited[i] |= copy[i];
      return res;
    };
    auto include_at = [&](VertexId root, std::set<VertexId>& side,
                          const std::set<VertexId>& opposite, VertexId other_root) {
      if (opposite.empty()) return;
      VertexId rep = *opposite.begin();
      for (const auto& e : g.adj[(size_t)root]) {
        VertexId cand = e.to;
        if (g.v(cand).klass != VClass::Element) continue;
        if (left.count(cand) || right.count(cand)) continue;
        if (try_include(cand, root, rep, other_root)) side.insert(cand);
      }
    };
    if (single) {
      std::set<VertexId> opposite = left;
      include_at(s1, left, opposite, s2);
      if (s2 != s1) include_at(s2, left, opposite, s1);
      right = left;
    } else {
      std::set<VertexId> l0 = left, r0 = right;
      include_at(s1, left, r0, s2);
      include_at(s2, right, l0, s1);
    }

    auto block_lists = [&](const std::vector<VertexId>& ordered) {
      std::vector<std::vector<std::string>> blocks;
      for (VertexId m : ordered) {
        std::vector<std::string> names;
        for (VertexId v : structure[m]) names.push_back(g.v(v).name);
        std::sort(names.begin(), names.end());
        blocks.push_back(names);
      }
      return blocks;
    };
    auto member_order = [&](const std::set<VertexId>& side) {
      std::vector<VertexId> ordered(side.begin(), side.end());
      std::sort(ordered.begin(), ordered.end(),
                [&](VertexId x, VertexId y) { return g.sort_key(x) < g.sort_key(y); });
      return ordered;
    };
    auto lookup = [&](VertexId x, VertexId y) -> const PairInfo* {
      auto it = valid_pairs.find({x, y});
      if (it != valid_pairs.end()) return &it->second;
      it = valid_pairs.find({y, x});
      if (it != valid_pairs.end()) return &it->second;
      return nullptr;
    };

    if (single) {
      Constraint arr;
      arr.type = ConstraintType::Array;
      arr.scope = scope;
      arr.name = new_array_token();
      arr.root = g.v(s1).name;
      auto ordered = member_order(left);
      arr.members = block_lists(ordered);
      for (size_t i = 0; i < ordered.size(); ++i)
        for (size_t j = i; j < ordered.size(); ++j) {
          const PairInfo* info = lookup(ordered[i], ordered[j]);
          if (!info) continue;
          if (i == j) {
            arr.self_members.push_back((int)i);
            continue;
          }
          arr.member_matches.push_back({(int)i, (int)j, info->kind, info->score});
        }
      for (VertexId m : ordered) out.side1.push_back(m);
      out.cs.push_back(arr);
      return out;
    }

    Constraint arr1, arr2;
    arr1.type = arr2.type = ConstraintType::Array;
    arr1.scope = arr2.scope = scope;
    arr1.name = new_array_token();
    arr2.name = new_array_token();
    arr1.root = g.v(s1).name;
    arr2.root = g.v(s2).name;
    auto lo = member_order(left);
    auto ro = member_order(right);
    arr1.members = block_lists(lo);
    arr2.members = block_lists(ro);
    bool any_approx = false;
    double min_score = 1.0;
    for (size_t i = 0; i < lo.size(); ++i)
      for (size_t j = 0; j < ro.size(); ++j) {
        const PairInfo* info = lookup(lo[i], ro[j]);
        if (!info) continue;
        if (info->kind == "approx") any_approx = true;
        min_score = std::min(min_score, info->score);
        arr1.member_matches.push_back({(int)i, (int)j, info->kind, info->score});
      }
    arr2.member_matches = arr1.member_matches;
    Constraint link;
    link.type = ConstraintType::Pair;
    link.scope = scope;
    link.a = arr1.name;
    link.b = arr2.name;
    link.kind = any_approx ? "approx" : "exact";
    link.score = min_score;
    out.cs.push_back(arr1);
    out.cs.push_back(arr2);
    out.cs.push_back(link);
    for (VertexId m : lo) out.side1.push_back(m);
    for (VertexId m : ro) out.side2.push_back(m);
    return out;
  }
};

struct ProbeOutcome {
  bool kept = false;
  std::vector<Constraint> cs;
  std::vector<std::pair<VertexId, VertexId>> probed;
  bool converged = false;
};

ProbeOutcome run_probe(const CircuitGraph& g, MatchContext& ctx, const Seed& seed, int index) {
  Explorer ex(g, ctx);
  ex.array_seq = index * 1000;  // probe-unique array tokens
  VisitedSet visited = g.fresh_marks();
  for (VertexId o : seed.origins) visited[(size_t)o] = 1;
  ExploreResult res;
  if (seed.s1 == seed.s2)
    res = ex.explore_self_root(visited, seed.s1);
  else
    res = ex.explore_nets(visited, seed.s1, seed.s2);
  ProbeOutcome out;
  out.converged = res.status == Status::Converged;
  out.kept = out.converged && !res.cs.empty();
  out.cs = std::move(res.cs);
  out.probed = std::move(res.probed);
  return out;
}

// Every element name a constraint refers to, arrays flattened.
std::set<std::string> constraint_elements(const std::vector<Constraint>& cs) {
  std::set<std::string> names;
  for (const auto& c : cs) {
    switch (c.type) {
      case ConstraintType::Pair:
      case ConstraintType::SymmetricNets: {
        for (const std::string* s : {&c.a, &c.b}) {
          std::string base = s->substr(0, s->find('/'));
          if (base.rfind("@array:", 0) != 0) names.insert(base);
        }
        break;
      }
      case ConstraintType::SelfSym:
        names.insert(c.a.substr(0, c.a.find('/')));
        break;
      case ConstraintType::Array:
        for (const auto& block : c.members)
          for (const auto& m : block) names.insert(m);
        break;
      case ConstraintType::CommonCentroid:
        for (const auto& d : c.devices) names.insert(d);
        break;
    }
  }
  return names;
}

}  // namespace

ScopeAnalysis analyze_scope(const Design& design, const SubcktDef& def,
                            const std::map<std::string, AnalysisSummary>& summaries,
                            const std::set<std::string>& supply, const SymmetryOptions& opts) {
  if (opts.library.empty())
    throw std::runtime_error("analyze_scope: options must carry a primitive library");
  ScopeAnalysis sa;
  CircuitGraph g0 = build_graph(def, design, supply);
  sa.uncollapsed = remove_inert_dummies(g0);

  sa.matches = match_primitives(sa.uncollapsed, opts.library);
  sa.graph = collapse(sa.uncollapsed, sa.matches);

  // Instances need their subckt summaries for port-symmetry lookups.
  for (auto& vx : sa.graph.vertices)
    if (vx.klass == VClass::Element && vx.comp.kind == ElementKind::Instance) {
      auto it = summaries.find(vx.comp.family);
      if (it != summaries.end()) vx.comp.summary = &it->second;
    }

  MatchContext ctx;
  ctx.design = &design;
  ctx.opts = &opts;
  ctx.summaries = &summaries;
  ctx.supply = supply;

  const CircuitGraph& g = sa.graph;
  std::vector<Seed> seeds = seed_candidates(g);

  // Instance-derived seeds: promoted symmetric ports, and corresponding
  // ports of two instances of the same subckt.
  std::vector<VertexId> insts;
  for (const auto& vx : g.vertices)
    if (vx.klass == VClass::Element && vx.comp.kind == ElementKind::Instance)
      insts.push_back(vx.id);
  std::sort(insts.begin(), insts.end(),
            [&](VertexId a, VertexId b) { return g.v(a).name < g.v(b).name; });
  std::set<std::pair<VertexId, VertexId>> seen;
  for (const auto& s : seeds) seen.insert(std::minmax(s.s1, s.s2));
  auto push_seed = [&](VertexId a, VertexId b, std::vector<VertexId> origins) {
    if (a == kNoVertex || b == kNoVertex || a == b) return;
    auto key = std::minmax(a, b);
    if (!seen.insert(key).second) return;
    seeds.push_back({a, b, std::move(origins)});
  };
  for (VertexId i : insts) {
    const CompositeInfo& c = g.v(i).comp;
    if (!c.summary) continue;
    for (const auto& [p, q] : c.summary->promoted_sym_ports) {
      const auto* pp = pin_net(c, p);
      const auto* pq = pin_net(c, q);
      if (pp && pq) push_seed(g.net(pp->second), g.net(pq->second), {i});
    }
  }
  for (size_t x = 0; x < insts.size(); ++x)
    for (size_t y = x + 1; y < insts.size(); ++y) {
      const CompositeInfo& ca = g.v(insts[x]).comp;
      const CompositeInfo& cb = g.v(insts[y]).comp;
      if (ca.family != cb.family) continue;
      for (const auto& [p, net] : ca.pins) {
        const auto* other = pin_net(cb, p);
        if (other) push_seed(g.net(net), g.net(other->second), {insts[x], insts[y]});
      }
    }

  // Self probes on shared nets with at least two like neighbors; these are
  // what roots arrays in circuits without seedable primitives.
  std::vector<std::string> net_names;
  for (const auto& [name, id] : g.net_index) net_names.push_back(name);
  std::sort(net_names.begin(), net_names.end());
  for (const auto& name : net_names) {
    VertexId n = g.net(name);
    if (g.v(n).is_supply) continue;
    std::map<std::string, int> cats;
    for (const auto& e : g.adj[(size_t)n]) {
      std::string key = g.sort_key(e.to);
      cats[key.substr(0, key.rfind('|'))]++;
    }
    bool shared = false;
    for (const auto& [k, cnt] : cats)
      if (cnt >= 2) shared = true;
    if (shared && seen.insert({n, n}).second) seeds.push_back({n, n, {}});
  }
  sa.seeds = seeds;

  // Probe every seed; independent probes may run in parallel, results are
  // merged in seed order so the outcome is schedule-independent.
  std::vector<ProbeOutcome> outcomes(seeds.size());
  int nthreads = std::max(1, opts.threads);
  if (nthreads == 1 || seeds.size() < 2) {
    for (size_t i = 0; i < seeds.size(); ++i) outcomes[i] = run_probe(g, ctx, seeds[i], (int)i);
  } else {
    std::vector<std::future<void>> futs;
    std::atomic<size_t> next{0};
    for (int t = 0; t < nthreads; ++t)
      futs.push_back(std::async(std::launch::async, [&]() {
        for (size_t i = next.fetch_add(1); i < seeds.size(); i = next.fetch_add(1))
          outcomes[i] = run_probe(g, ctx, seeds[i], (int)i);
      }));
    for (auto& f : futs) f.get();
  }

  // Promotions come from every converged probe, before subsumption: a
  // dropped duplicate axis still proves its port pair symmetric.
  std::set<std::pair<std::string, std::string>> promoted;
  auto promote = [&](const std::string& a, const std::string& b) {
    if (a == b) return;
    auto pr = std::minmax(a, b);
    promoted.insert({pr.first, pr.second});
  };
  for (size_t i = 0; i < seeds.size(); ++i) {
    if (!outcomes[i].kept) continue;
    for (const auto& [q1, q2] : outcomes[i].probed) {
      const Vertex& v1 = g.v(q1);
      const Vertex& v2 = g.v(q2);
      if (v1.is_port && v2.is_port) promote(v1.name, v2.name);
    }
  }
  // Declared primitive symmetries lift to ports when the primitive sits on a
  // kept axis (or seeded one as its origin).
  std::set<std::string> on_axis_elems;
  std::vector<size_t> kept_idx;
  for (size_t i = 0; i < seeds.size(); ++i)
    if (outcomes[i].kept) kept_idx.push_back(i);
  for (size_t i : kept_idx) {
    auto elems = constraint_elements(outcomes[i].cs);
    on_axis_elems.insert(elems.begin(), elems.end());
    for (VertexId o : seeds[i].origins) on_axis_elems.insert(g.v(o).name);
  }
  for (const auto& vx : sa.graph.vertices) {
    if (vx.klass != VClass::Element || vx.comp.kind != ElementKind::Primitive) continue;
    if (!on_axis_elems.count(vx.name)) continue;
    auto port_if = [&](const std::string& net) -> std::optional<std::string> {
      VertexId n = g.net(net);
      if (n != kNoVertex && g.v(n).is_port) return g.v(n).name;
      return std::nullopt;
    };
    auto lift = [&](const std::string& na, const std::string& nb) {
      auto pa = port_if(na), pb = port_if(nb);
      if (pa && pb) promote(*pa, *pb);
    };
    const CompositeInfo& c = vx.comp;
    if (c.family == "dp") {
      lift(c.dp_sides[0].first, c.dp_sides[1].first);
      lift(c.dp_sides[0].second, c.dp_sides[1].second);
    } else if (c.family == "mirror") {
      for (size_t x = 0; x < c.out_nets.size(); ++x)
        for (size_t y = x + 1; y < c.out_nets.size(); ++y)
          if (close_rel(c.out_nets[x].second, c.out_nets[y].second))
            lift(c.out_nets[x].first, c.out_nets[y].first);
    } else {
      for (const auto& [na, nb] : c.sym_port_pairs) lift(na, nb);
    }
  }

  // Subsumption: drop an axis whose element set is covered by a kept axis.
  struct Axis {
    size_t probe;
    std::set<std::string> elems;
    std::vector<Constraint> cs;
  };
  std::vector<Axis> axes;
  for (size_t i : kept_idx) axes.push_back({i, constraint_elements(outcomes[i].cs), outcomes[i].cs});
  std::stable_sort(axes.begin(), axes.end(), [](const Axis& a, const Axis& b) {
    return a.elems.size() > b.elems.size();
  });
  std::vector<Axis> kept_axes;
  for (auto& ax : axes) {
    bool covered = false;
    for (const auto& k : kept_axes)
      if (std::includes(k.elems.begin(), k.elems.end(), ax.elems.begin(), ax.elems.end()))
        covered = true;
    if (!covered) kept_axes.push_back(std::move(ax));
  }
  std::sort(kept_axes.begin(), kept_axes.end(),
            [](const Axis& a, const Axis& b) { return a.probe < b.probe; });

  ConstraintSet& set = sa.constraints;
  int axis_id = 0;
  for (auto& ax : kept_axes) {
    for (auto& c : ax.cs) {
      c.axis = axis_id;
      set.items.push_back(c);
    }
    ++axis_id;
  }

  // Name the generated arrays: Dummy<n> when every member is a dummy device
  // (MOS gated by a rail), Array<n> otherwise; then patch references.
  auto is_dummy_block = [&](const std::vector<std::string>& block) {
    for (const auto& name : block) {
      VertexId id = sa.uncollapsed.element(name);
      if (id == kNoVertex) return false;
      const Vertex& vx = sa.uncollapsed.v(id);
      if (vx.comp.kind != ElementKind::Leaf) return false;
      const Device* dev = vx.device;
      if (dev->kind != DeviceKind::Nmos && dev->kind != DeviceKind::Pmos) return false;
      const std::string* gate = dev->net_of(Terminal::Gate);
      if (!gate || !supply.count(*gate)) return false;
    }
    return true;
  };
  std::vector<Constraint*> arrays;
  for (auto& c : set.items)
    if (c.type == ConstraintType::Array) arrays.push_back(&c);
  std::sort(arrays.begin(), arrays.end(), [](const Constraint* a, const Constraint* b) {
    return std::tie(a->root, a->members) < std::tie(b->root, b->members);
  });
  std::map<std::string, std::string> rename;
  int dummy_n = 0, array_n = 0;
  for (Constraint* arr : arrays) {
    bool all_dummy = !arr->members.empty();
    for (const auto& block : arr->members)
      if (!is_dummy_block(block)) all_dummy = false;
    std::string name = all_dummy ? "Dummy" + std::to_string(++dummy_n)
                                 : "Array" + std::to_string(++array_n);
    rename[arr->name] = name;
    arr->name = name;
  }
  for (auto& c : set.items) {
    if (c.type != ConstraintType::Pair) continue;
    auto it = rename.find(c.a);
    if (it != rename.end()) c.a = it->second;
    it = rename.find(c.b);
    if (it != rename.end()) c.b = it->second;
    if (c.a > c.b) std::swap(c.a, c.b);
  }

  // Primitive-declared constraints are always part of the output.
  for (const auto& m : sa.matches) {
    if (!m.def->common_centroid) continue;
    Constraint c;
    c.type = ConstraintType::CommonCentroid;
    c.scope = def.name;
    c.devices = m.members;
    std::sort(c.devices.begin(), c.devices.end());
    c.source = m.name;
    set.items.push_back(c);
  }

  // Contradiction check on merged axes: one pair claimed both ways.
  std::map<std::pair<std::string, std::string>, std::string> pair_kinds;
  for (const auto& c : set.items) {
    if (c.type != ConstraintType::Pair) continue;
    auto key = std::make_pair(c.a, c.b);
    auto it = pair_kinds.find(key);
    if (it != pair_kinds.end() && it->second != c.kind)
      set.warnings.push_back("conflicting match kinds for pair (" + c.a + ", " + c.b +
                             ") in scope " + def.name);
    pair_kinds[key] = c.kind;
  }

  set.canonicalize();

  sa.summary.subckt = def.name;
  sa.summary.device_count = device_count_recursive(design, def);
  for (const auto& [a, b] : promoted) sa.summary.promoted_sym_ports.push_back({a, b});
  return sa;
}

ConstraintSet run_detection(const Design& design, const SymmetryOptions& opts_in) {
  SymmetryOptions opts = opts_in;
  if (opts.library.empty()) opts.library = builtin_library();

  std::string warn;
  std::set<std::string> supply = identify_supply_nets(design, opts.supply_overrides, &warn);

  // Reachable subckts, children before parents.
  std::vector<const SubcktDef*> order;
  std::set<std::string> visited;
  std::function<void(const SubcktDef&)> visit = [&](const SubcktDef& def) {
    if (!visited.insert(def.name).second) return;
    for (const auto& dev : def.devices)
      if (dev.kind == DeviceKind::Subckt)
        if (const SubcktDef* child = design.find(dev.model)) visit(*child);
    order.push_back(&def);
  };
  visit(design.top_def());

  std::map<std::string, AnalysisSummary> summaries;
  ConstraintSet all;
  if (!warn.empty()) all.warnings.push_back(warn);
  for (const SubcktDef* def : order) {
    ScopeAnalysis sa = analyze_scope(design, *def, summaries, supply, opts);
    summaries[def->name] = sa.summary;
    for (auto& c : sa.constraints.items) all.items.push_back(std::move(c));
    for (auto& w : sa.constraints.warnings) all.warnings.push_back(std::move(w));
  }
  all.canonicalize();
  return all;
}

}  // namespace symcon
