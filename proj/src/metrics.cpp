// Routability metrics: Voronoi cells, clipped cell graphs, traversable
// boundary pairs, local CC/BC and buffered edge retrieval.
#include "pathweaver/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "pathweaver/error.hpp"

namespace pathweaver {

namespace {

constexpr double kTouchTol = 1e-6;

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

bool inside_convex(Vec2 p, const Polygon& ccw) {
  const std::size_t n = ccw.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = ccw[i];
    const Vec2 e = ccw[(i + 1) % n] - a;
    const double len = norm(e);
    if (len == 0.0) continue;
    if (cross(e, p - a) / len < -kTouchTol) return false;
  }
  return true;
}

template <typename F>
void for_cells(std::size_t n, Exec exec, F&& f) {
  const int count = static_cast<int>(n);
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) f(static_cast<std::size_t>(i));
  } else {
    for (int i = 0; i < count; ++i) f(static_cast<std::size_t>(i));
  }
}

}  // namespace

VoronoiPartition voronoi_partition(std::span<const Vec2> sites, const Box& bbox) {
  if (sites.empty()) throw Error(ErrorKind::EmptyInput, "voronoi partition needs at least one site");
  if (!(bbox.width() > 0.0 && bbox.height() > 0.0)) throw Error(ErrorKind::Degenerate, "voronoi bbox is empty");
  VoronoiPartition part;
  part.bbox = bbox;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const Vec2 s = sites[i];
    if (!bbox.contains(s)) {
      throw Error(ErrorKind::Validation, "site " + std::to_string(i) + " lies outside the partition bbox");
    }
    const bool dup = std::any_of(part.sites.begin(), part.sites.end(),
                                 [&](Vec2 q) { return distance(q, s) < 1e-6; });
    if (dup) {
      part.warnings.push_back("site " + std::to_string(i) + " merged with an earlier site");
      continue;
    }
    part.sites.push_back(s);
  }

  const Polygon box{bbox.min, {bbox.max.x, bbox.min.y}, bbox.max, {bbox.min.x, bbox.max.y}};
  int next_id = 0;
  for (std::size_t i = 0; i < part.sites.size(); ++i) {
    const Vec2 si = part.sites[i];
    Polygon cell = box;
    for (std::size_t j = 0; j < part.sites.size() && !cell.empty(); ++j) {
      if (j == i) continue;
      const Vec2 d = part.sites[j] - si;
      const Vec2 m = (si + part.sites[j]) * 0.5;
      // Keep the side closer to si: (p - m) . d <= 0.
      cell = clip_half_plane(cell, m, m + Vec2{-d.y, d.x});
    }
    VoronoiCell vc;
    vc.site = i;
    vc.center = si;
    vc.polygon = std::move(cell);
    for (std::size_t k = 0; k < vc.polygon.size(); ++k) vc.boundary_ids.push_back(next_id++);
    part.cells.push_back(std::move(vc));
  }
  return part;
}

std::vector<std::size_t> CellGraph::components(std::size_t* count) const {
  UnionFind uf(vertices.size());
  for (auto [a, b] : edges) uf.unite(a, b);
  std::vector<std::size_t> label(vertices.size());
  std::map<std::size_t, std::size_t> ids;
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    const auto [it, fresh] = ids.emplace(uf.find(v), ids.size());
    label[v] = it->second;
  }
  if (count) *count = ids.size();
  return label;
}

CellGraph clip_to_cell(const PedestrianGraph& g, const VoronoiCell& cell) {
  CellGraph out;
  const Polygon& poly = cell.polygon;
  if (poly.size() < 3) return out;
  const Box cell_box = bounding_box(poly);

  auto add_vertex = [&](Vec2 p) {
    std::set<int> t;
    for (std::size_t k = 0; k < poly.size(); ++k) {
      if (point_segment_distance(p, cell.boundary_start(k), cell.boundary_end(k)) <= kTouchTol) {
        t.insert(cell.boundary_ids[k]);
      }
    }
    out.vertices.push_back(p);
    out.touches.push_back(std::move(t));
    return out.vertices.size() - 1;
  };

  std::map<NodeId, std::size_t> node_vertex;
  auto node_vertex_of = [&](const PedNode& n) {
    auto it = node_vertex.find(n.id);
    if (it != node_vertex.end()) return it->second;
    const std::size_t v = add_vertex(n.local_xy);
    node_vertex.emplace(n.id, v);
    return v;
  };
  for (const PedNode& n : g.nodes) {
    if (inside_convex(n.local_xy, poly)) node_vertex_of(n);
  }

  for (const PedEdge& e : g.edges) {
    if (e.geometry.size() < 2) continue;
    Box eb = bounding_box(e.geometry);
    if (eb.max.x < cell_box.min.x - kTouchTol || eb.min.x > cell_box.max.x + kTouchTol ||
        eb.max.y < cell_box.min.y - kTouchTol || eb.min.y > cell_box.max.y + kTouchTol) {
      continue;
    }
    const std::size_t last = e.geometry.size() - 2;
    struct Run {
      Vec2 start, end;
      bool from_u = false, to_v = false;
    };
    std::vector<Run> runs;
    bool open = false;
    for (std::size_t i = 0; i + 1 < e.geometry.size(); ++i) {
      const Vec2 a = e.geometry[i];
      const Vec2 b = e.geometry[i + 1];
      const auto clip = clip_segment_convex(a, b, poly);
      if (!clip) {
        open = false;
        continue;
      }
      const auto [t0, t1] = *clip;
      if (!(open && t0 == 0.0)) {
        runs.push_back({a + (b - a) * t0, a + (b - a) * t0, i == 0 && t0 == 0.0, false});
      }
      runs.back().end = a + (b - a) * t1;
      runs.back().to_v = (i == last && t1 == 1.0);
      open = (t1 == 1.0);
    }
    const PedNode* nu = g.find_node(e.u);
    const PedNode* nv = g.find_node(e.v);
    for (const Run& r : runs) {
      const bool point = r.start == r.end;
      if (point && !r.from_u && !r.to_v) continue;
      const std::size_t s = (r.from_u && nu) ? node_vertex_of(*nu) : add_vertex(r.start);
      const std::size_t t = (r.to_v && nv) ? node_vertex_of(*nv) : (point ? s : add_vertex(r.end));
      if (s != t) out.edges.emplace_back(s, t);
    }
  }
  return out;
}

TraversablePairSet traversable_pairs(const PedestrianGraph& g, const VoronoiCell& cell, std::size_t cell_index) {
  TraversablePairSet out;
  out.cell = cell_index;
  const CellGraph cg = clip_to_cell(g, cell);
  std::size_t k = 0;
  const std::vector<std::size_t> label = cg.components(&k);
  std::vector<std::set<int>> touched(k);
  for (std::size_t v = 0; v < cg.vertices.size(); ++v) {
    touched[label[v]].insert(cg.touches[v].begin(), cg.touches[v].end());
  }
  for (const std::set<int>& ids : touched) {
    for (auto i = ids.begin(); i != ids.end(); ++i) {
      for (auto j = std::next(i); j != ids.end(); ++j) out.pairs.emplace(*i, *j);
    }
  }
  return out;
}

double jaccard(const std::set<BoundaryPair>& a, const std::set<BoundaryPair>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const BoundaryPair& p : a) inter += b.contains(p) ? 1 : 0;
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

SimilarityResult traversability_similarity(const PedestrianGraph& pred, const PedestrianGraph& truth,
                                           const VoronoiPartition& part, Exec exec) {
  SimilarityResult res;
  res.per_cell.assign(part.cells.size(), 0.0);
  for_cells(part.cells.size(), exec, [&](std::size_t i) {
    const auto p = traversable_pairs(pred, part.cells[i], i);
    const auto t = traversable_pairs(truth, part.cells[i], i);
    res.per_cell[i] = jaccard(p.pairs, t.pairs);
  });
  double s = 0.0;
  for (double v : res.per_cell) s += v;
  res.mean = res.per_cell.empty() ? 0.0 : s / static_cast<double>(res.per_cell.size());
  return res;
}

std::vector<double> betweenness(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (auto [a, b] : edges) {
    if (a == b) continue;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }

  std::vector<double> bc(n, 0.0);
  std::vector<std::vector<std::size_t>> pred(n);
  std::vector<double> sigma(n), delta(n);
  std::vector<long> dist(n);
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < n; ++v) {
      pred[v].clear();
      sigma[v] = 0.0;
      delta[v] = 0.0;
      dist[v] = -1;
    }
    order.clear();
    sigma[s] = 1.0;
    dist[s] = 0;
    std::deque<std::size_t> queue{s};
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      order.push_back(v);
      for (std::size_t w : adj[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          pred[w].push_back(v);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t w = *it;
      for (std::size_t v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) bc[w] += delta[w];
    }
  }

  // Undirected: every pair was counted from both ends.
  UnionFind uf(n);
  for (auto [a, b] : edges) uf.unite(a, b);
  std::map<std::size_t, std::size_t> size;
  for (std::size_t v = 0; v < n; ++v) ++size[uf.find(v)];
  for (std::size_t v = 0; v < n; ++v) {
    const double c = static_cast<double>(size[uf.find(v)]);
    bc[v] = c < 3.0 ? 0.0 : (bc[v] / 2.0) / ((c - 1.0) * (c - 2.0) / 2.0);
  }
  return bc;
}

LocalStats local_cc_bc(const PedestrianGraph& g, const VoronoiPartition& part, Exec exec) {
  LocalStats out;
  out.cc_per_cell.assign(part.cells.size(), 0.0);
  out.bc_per_cell.assign(part.cells.size(), 0.0);
  for_cells(part.cells.size(), exec, [&](std::size_t i) {
    const CellGraph cg = clip_to_cell(g, part.cells[i]);
    if (cg.vertices.empty()) return;
    std::size_t k = 0;
    cg.components(&k);
    out.cc_per_cell[i] = static_cast<double>(k);
    if (cg.vertices.size() < 3) return;
    const std::vector<double> bc = betweenness(cg.vertices.size(), cg.edges);
    double s = 0.0;
    for (double v : bc) s += v;
    out.bc_per_cell[i] = s / static_cast<double>(bc.size());
  });
  if (!part.cells.empty()) {
    const double n = static_cast<double>(part.cells.size());
    for (std::size_t i = 0; i < part.cells.size(); ++i) {
      out.avg_cc += out.cc_per_cell[i];
      out.avg_bc += out.bc_per_cell[i];
    }
    out.avg_cc /= n;
    out.avg_bc /= n;
  }
  return out;
}

namespace {

// Uniform grid over segments for radius queries.
class SegmentIndex {
 public:
  SegmentIndex(const PedestrianGraph& g, double cell) : cell_(cell) {
    for (const PedEdge& e : g.edges) {
      for (std::size_t i = 1; i < e.geometry.size(); ++i) {
        const Segment s{e.geometry[i - 1], e.geometry[i]};
        const std::size_t id = segs_.size();
        segs_.push_back(s);
        const Box b = bounding_box(std::vector<Vec2>{s.a, s.b});
        for (long x = key(b.min.x); x <= key(b.max.x); ++x) {
          for (long y = key(b.min.y); y <= key(b.max.y); ++y) grid_[pack(x, y)].push_back(id);
        }
      }
    }
  }

  bool within(Vec2 p, double tol) const {
    for (long x = key(p.x - tol); x <= key(p.x + tol); ++x) {
      for (long y = key(p.y - tol); y <= key(p.y + tol); ++y) {
        const auto it = grid_.find(pack(x, y));
        if (it == grid_.end()) continue;
        for (std::size_t id : it->second) {
          if (point_segment_distance(p, segs_[id].a, segs_[id].b) <= tol) return true;
        }
      }
    }
    return false;
  }

 private:
  long key(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  static std::int64_t pack(long x, long y) {
    return (static_cast<std::int64_t>(x) << 32) ^ (static_cast<std::int64_t>(y) & 0xffffffff);
  }

  double cell_;
  std::vector<Segment> segs_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> grid_;
};

// Fraction of `a`'s length (sampled every 0.25 m) lying within tol of `b`.
std::pair<double, double> length_within(const PedestrianGraph& a, const PedestrianGraph& b, double tol) {
  const SegmentIndex index(b, std::max(tol, 1.0));
  double total = 0.0;
  double inside = 0.0;
  for (const PedEdge& e : a.edges) {
    for (std::size_t i = 1; i < e.geometry.size(); ++i) {
      const Vec2 p = e.geometry[i - 1];
      const Vec2 q = e.geometry[i];
      const double len = distance(p, q);
      if (len == 0.0) continue;
      const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(len / 0.25)));
      const double w = len / static_cast<double>(k);
      for (std::size_t j = 0; j < k; ++j) {
        const Vec2 mid = p + (q - p) * ((static_cast<double>(j) + 0.5) / static_cast<double>(k));
        total += w;
        if (index.within(mid, tol)) inside += w;
      }
    }
  }
  return {inside, total};
}

}  // namespace

RetrievalScore edge_retrieval_f1(const PedestrianGraph& pred, const PedestrianGraph& truth, double tol_m) {
  if (!(tol_m > 0.0)) throw Error(ErrorKind::Config, "edge retrieval tolerance must be positive");
  RetrievalScore out;
  const auto [p_in, p_total] = length_within(pred, truth, tol_m);
  const auto [t_in, t_total] = length_within(truth, pred, tol_m);
  if (p_total > 0.0) {
    out.precision = p_in / p_total;
  } else {
    out.flags.push_back("empty_prediction");
  }
  if (t_total > 0.0) {
    out.recall = t_in / t_total;
  } else {
    out.flags.push_back("empty_truth");
  }
  const double s = out.precision + out.recall;
  out.f1 = s > 0.0 ? 2.0 * out.precision * out.recall / s : 0.0;
  return out;
}

GlobalStats global_stats(const PedestrianGraph& g) {
  GlobalStats s;
  s.nodes = g.nodes.size();
  s.edges = g.edges.size();
  s.avg_degree = s.nodes == 0 ? 0.0 : 2.0 * static_cast<double>(s.edges) / static_cast<double>(s.nodes);
  return s;
}

EvalReport evaluate(const PedestrianGraph& pred, const PedestrianGraph& truth, const VoronoiPartition& part,
                    double tol_m, Exec exec) {
  EvalReport r;
  r.tol_m = tol_m;
  r.cell_count = part.cells.size();
  r.warnings = part.warnings;
  r.pred = global_stats(pred);
  r.truth = global_stats(truth);
  r.pred_local = local_cc_bc(pred, part, exec);
  r.truth_local = local_cc_bc(truth, part, exec);
  r.similarity = traversability_similarity(pred, truth, part, exec);
  r.retrieval = edge_retrieval_f1(pred, truth, tol_m);
  return r;
}

std::string eval_report_json(const EvalReport& r) {
  using nlohmann::ordered_json;
  auto global = [](const GlobalStats& s) {
    return ordered_json{{"nodes", s.nodes}, {"edges", s.edges}, {"avg_degree", s.avg_degree}};
  };
  auto local = [](const LocalStats& s) {
    return ordered_json{{"avg_cc", s.avg_cc}, {"avg_bc", s.avg_bc}, {"cc_per_cell", s.cc_per_cell},
                        {"bc_per_cell", s.bc_per_cell}};
  };
  ordered_json j;
  j["global"] = {{"pred", global(r.pred)}, {"truth", global(r.truth)}};
  j["local"] = {{"pred", local(r.pred_local)}, {"truth", local(r.truth_local)}};
  j["traversability_similarity"] = {{"mean", r.similarity.mean}, {"per_cell", r.similarity.per_cell}};
  j["edge_retrieval"] = {{"tol_m", r.tol_m},
                         {"precision", r.retrieval.precision},
                         {"recall", r.retrieval.recall},
                         {"f1", r.retrieval.f1},
                         {"flags", r.retrieval.flags}};
  j["cells"] = r.cell_count;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

}  // namespace pathweaver
