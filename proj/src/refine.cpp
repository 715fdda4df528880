// Corner node refinement against the corner_bulb plane.
#include "pathweaver/refine.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "pathweaver/error.hpp"

namespace pathweaver {

namespace {

constexpr double kInsideEps = 1e-6;

bool is_corner_kind(PedNodeKind k) { return k == PedNodeKind::SidewalkEndpoint || k == PedNodeKind::Curb; }

std::vector<Vec2> warp_px(const CornerGroup& cg, const AffineParams& theta, const ProbabilityRaster& r) {
  std::vector<Vec2> out;
  out.reserve(cg.ring.size());
  const double w = static_cast<double>(r.width);
  const double h = static_cast<double>(r.height);
  for (Vec2 p : cg.ring) {
    Vec2 q = theta.apply(r.world_to_pixel(p));
    q.x = std::clamp(q.x, kInsideEps, w - kInsideEps);
    q.y = std::clamp(q.y, kInsideEps, h - kInsideEps);
    out.push_back(q);
  }
  return out;
}

// Normalized search coordinates: A = I + U / rho and a translation about the
// ring centroid, so every coordinate moves ring vertices by about one pixel
// per unit.
struct Frame {
  Vec2 centroid;
  double rho = 1.0;

  AffineParams to_params(const std::array<double, 6>& u) const {
    AffineParams p;
    p.a = 1.0 + u[0] / rho;
    p.b = u[1] / rho;
    p.c = u[2] / rho;
    p.d = 1.0 + u[3] / rho;
    const Vec2 ac{p.a * centroid.x + p.b * centroid.y, p.c * centroid.x + p.d * centroid.y};
    p.t1 = centroid.x - ac.x + u[4];
    p.t2 = centroid.y - ac.y + u[5];
    return p;
  }
};

double det_of(const std::array<double, 6>& u, double rho) {
  return (1.0 + u[0] / rho) * (1.0 + u[3] / rho) - (u[1] / rho) * (u[2] / rho);
}

// Scales A onto the determinant box; false when A is singular or reflected.
bool clamp_det(std::array<double, 6>& u, double rho, double lo, double hi) {
  const double det = det_of(u, rho);
  if (!(det > 0.0)) return false;
  if (det >= lo && det <= hi) return true;
  const double s = std::sqrt((det < lo ? lo : hi) / det);
  const double a = (1.0 + u[0] / rho) * s, b = u[1] / rho * s, c = u[2] / rho * s, d = (1.0 + u[3] / rho) * s;
  u[0] = (a - 1.0) * rho;
  u[1] = b * rho;
  u[2] = c * rho;
  u[3] = (d - 1.0) * rho;
  return true;
}

}  // namespace

std::uint64_t corner_stream(const CornerTag& tag) {
  return (static_cast<std::uint64_t>(tag.intersection) << 8) ^ static_cast<std::uint64_t>(tag.sector & 0xff);
}

std::vector<CornerGroup> group_corner_nodes(const PedestrianGraph& g, NodeId intersection,
                                            const StreetNetwork& net, double radius_m) {
  std::vector<CornerGroup> out;
  if (net.degree(intersection) < 2) return out;
  const std::vector<double> bearings = street_bearings_at(net, intersection);
  const Vec2 center = net.node(intersection).local_xy;
  const bool tagged = std::any_of(g.nodes.begin(), g.nodes.end(), [&](const PedNode& n) {
    return n.corner && n.corner->intersection == intersection;
  });

  std::map<int, std::vector<const PedNode*>> by_sector;
  for (const PedNode& n : g.nodes) {
    if (!is_corner_kind(n.kind)) continue;
    if (tagged) {
      if (n.corner && n.corner->intersection == intersection) by_sector[n.corner->sector].push_back(&n);
    } else if (!n.corner && distance(n.local_xy, center) <= radius_m) {
      by_sector[sector_of(bearings, bearing_deg(center, n.local_xy))].push_back(&n);
    }
  }

  for (auto& [sector, members] : by_sector) {
    std::vector<Vec2> pts;
    for (const PedNode* n : members) pts.push_back(n->local_xy);
    const Vec2 c = centroid_of_points(pts);
    std::sort(members.begin(), members.end(), [&](const PedNode* p, const PedNode* q) {
      const double ap = std::atan2(p->local_xy.y - c.y, p->local_xy.x - c.x);
      const double aq = std::atan2(q->local_xy.y - c.y, q->local_xy.x - c.x);
      return ap < aq || (ap == aq && p->id < q->id);
    });
    CornerGroup cg;
    cg.tag = {intersection, sector};
    for (const PedNode* n : members) {
      cg.nodes.push_back(n->id);
      cg.ring.push_back(n->local_xy);
    }
    out.push_back(std::move(cg));
  }
  return out;
}

PolygonScore polygon_score(const CornerGroup& cg, const AffineParams& theta, const ProbabilityRaster& r,
                           Exec exec) {
  const std::size_t plane = r.require_class("corner_bulb");
  const std::vector<Vec2> px = warp_px(cg, theta, r);
  if (!is_simple_polygon(px)) return {};
  const PolygonSum s = polygon_sum_px(r, px, plane, exec);
  return {s.sum, s.count};
}

double mean_polygon_probability(const CornerGroup& cg, const AffineParams& theta, const ProbabilityRaster& r) {
  const PolygonScore s = polygon_score(cg, theta, r);
  return s.m == 0 ? 0.0 : s.g / static_cast<double>(s.m);
}

std::vector<Vec2> warped_positions(const CornerGroup& cg, const AffineParams& theta, const ProbabilityRaster& r) {
  std::vector<Vec2> out;
  for (Vec2 q : warp_px(cg, theta, r)) out.push_back(r.pixel_to_world(q));
  return out;
}

SpsaResult spsa_optimize(const CornerGroup& cg, const ProbabilityRaster& r, const SpsaConfig& cfg,
                         std::uint64_t stream) {
  r.require_class("corner_bulb");
  if (cfg.iterations < 1) throw Error(ErrorKind::Config, "spsa iterations must be at least 1");

  Frame frame;
  std::vector<Vec2> px;
  for (Vec2 p : cg.ring) px.push_back(r.world_to_pixel(p));
  frame.centroid = centroid_of_points(px);
  double rr = 0.0;
  for (Vec2 p : px) rr += dot(p - frame.centroid, p - frame.centroid);
  frame.rho = std::max(1.0, std::sqrt(rr / static_cast<double>(std::max<std::size_t>(px.size(), 1))));

  auto score = [&](const std::array<double, 6>& u) { return polygon_score(cg, frame.to_params(u), r).g; };

  SpsaResult res;
  std::array<double, 6> u{};
  res.initial_score = score(u);
  res.best_score = res.initial_score;
  res.theta = AffineParams{};
  res.trace.reserve(static_cast<std::size_t>(cfg.iterations));

  std::mt19937_64 rng(cfg.seed ^ stream);
  for (int k = 0; k < cfg.iterations; ++k) {
    const double ak = cfg.a / std::pow(k + 1 + cfg.A_stability, cfg.alpha);
    const double ck = cfg.c / std::pow(k + 1, cfg.gamma);
    std::array<double, 6> delta{};
    const std::uint64_t bits = rng();
    for (std::size_t i = 0; i < 6; ++i) delta[i] = ((bits >> i) & 1u) ? 1.0 : -1.0;

    std::array<double, 6> up = u, um = u;
    for (std::size_t i = 0; i < 6; ++i) {
      up[i] += ck * delta[i];
      um[i] -= ck * delta[i];
    }
    const double diff = score(um) - score(up);  // (-g+) - (-g-)
    std::array<double, 6> next = u;
    for (std::size_t i = 0; i < 6; ++i) {
      const double grad = diff / (2.0 * ck * delta[i]);
      // One step never moves a coordinate further than the perturbation scale.
      next[i] -= std::clamp(ak * grad, -ck, ck);
    }
    if (clamp_det(next, frame.rho, cfg.det_min, cfg.det_max)) u = next;

    const double gk = score(u);
    res.trace.push_back(gk);
    if (gk > res.best_score) {
      res.best_score = gk;
      res.best_iteration = k;
      res.theta = frame.to_params(u);
    }
  }
  return res;
}

namespace {

struct ChainInfo {
  std::vector<std::size_t> edges;  // indices into g.edges
  std::set<NodeId> inner;          // curbs and midpoint
  std::set<NodeId> touched;        // every endpoint
};

Vec2 midpoint_on_street(Vec2 a, Vec2 b, Vec2 old_mid, const StreetNetwork* net, std::optional<EdgeId> street) {
  const double len = distance(a, b);
  if (len <= 0.0) return a;
  double t = closest_on_segment(old_mid, a, b).t;
  if (net && street && *street >= 0 && static_cast<std::size_t>(*street) < net->edges.size()) {
    const Polyline& line = net->edge(*street).local_geometry;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
      if (auto hit = intersect_segments(a, b, line[i], line[i + 1])) {
        const double d = distance(hit->point, old_mid);
        if (d < best) {
          best = d;
          t = hit->t;
        }
      }
    }
  }
  t = std::clamp(t, 0.05, 0.95);
  return a + (b - a) * t;
}

}  // namespace

PedestrianGraph prune_and_rebuild(const PedestrianGraph& g, std::span<const CornerDecision> decisions,
                                  const StreetNetwork* net) {
  std::set<CornerTag> known;
  for (const PedNode& n : g.nodes) {
    if (n.corner) known.insert(*n.corner);
  }
  std::set<CornerTag> dropped;
  std::map<NodeId, Vec2> moved;
  for (const CornerDecision& d : decisions) {
    if (!known.contains(d.corner)) {
      throw Error(ErrorKind::Validation, "decision for unknown corner " + std::to_string(d.corner.intersection) +
                                             "/" + std::to_string(d.corner.sector));
    }
    if (!d.keep) {
      dropped.insert(d.corner);
    } else {
      for (const auto& [id, p] : d.moved) moved[id] = p;
    }
  }

  PedestrianGraph out;
  out.frame = g.frame;
  std::map<NodeId, PedNode> nodes;
  for (const PedNode& n : g.nodes) nodes.emplace(n.id, n);

  // Crossing chains, keyed by their shared group id.
  std::map<std::int64_t, ChainInfo> chains;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const PedEdge& e = g.edges[i];
    if (!e.crossing) continue;
    ChainInfo& c = chains[*e.crossing];
    c.edges.push_back(i);
    for (NodeId id : {e.u, e.v}) {
      c.touched.insert(id);
      const auto it = nodes.find(id);
      if (it != nodes.end() && it->second.kind != PedNodeKind::SidewalkEndpoint) c.inner.insert(id);
    }
  }

  std::set<NodeId> removed;
  std::set<std::size_t> removed_edges;
  for (const auto& [id, n] : nodes) {
    if (n.corner && dropped.contains(*n.corner) && n.kind != PedNodeKind::SidewalkEndpoint) removed.insert(id);
  }
  for (const auto& [cid, c] : chains) {
    bool hit = false;
    for (NodeId id : c.touched) {
      const PedNode& n = nodes.at(id);
      if (removed.contains(id) || (n.corner && dropped.contains(*n.corner))) hit = true;
    }
    if (!hit) continue;
    for (std::size_t i : c.edges) removed_edges.insert(i);
    for (NodeId id : c.inner) removed.insert(id);
  }

  // Move kept nodes, then re-derive midpoints of crossings whose curbs moved.
  std::set<NodeId> optimized;
  for (const auto& [id, p] : moved) {
    auto it = nodes.find(id);
    if (it == nodes.end() || removed.contains(id)) continue;
    it->second.local_xy = p;
    it->second.provenance = Provenance::Optimized;
    optimized.insert(id);
  }
  for (const auto& [cid, c] : chains) {
    if (removed_edges.contains(c.edges.front())) continue;
    std::vector<NodeId> curbs;
    std::optional<NodeId> mid;
    for (NodeId id : c.inner) {
      const PedNode& n = nodes.at(id);
      if (n.kind == PedNodeKind::Curb) curbs.push_back(id);
      if (n.kind == PedNodeKind::CrossingMidpoint) mid = id;
    }
    if (!mid || curbs.size() != 2) continue;
    if (!optimized.contains(curbs[0]) && !optimized.contains(curbs[1])) continue;
    PedNode& m = nodes.at(*mid);
    m.local_xy = midpoint_on_street(nodes.at(curbs[0]).local_xy, nodes.at(curbs[1]).local_xy, m.local_xy, net,
                                    m.street);
    m.provenance = Provenance::Optimized;
    optimized.insert(*mid);
  }

  std::vector<PedEdge> edges;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    if (removed_edges.contains(i)) continue;
    PedEdge e = g.edges[i];
    if (removed.contains(e.u) || removed.contains(e.v)) continue;
    edges.push_back(std::move(e));
  }

  // Dissolve sidewalk endpoints of dropped corners that now only join two sidewalk edges.
  for (const auto& [id, n] : nodes) {
    if (removed.contains(id) || !n.corner || !dropped.contains(*n.corner)) continue;
    std::vector<std::size_t> inc;
    bool other = false;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const PedEdge& e = edges[i];
      if (e.u != id && e.v != id) continue;
      if (e.kind != PedEdgeKind::Sidewalk || e.u == e.v) other = true;
      inc.push_back(i);
    }
    if (other || inc.size() != 2) {
      if (inc.empty()) removed.insert(id);
      continue;
    }
    PedEdge first = edges[inc[0]];
    PedEdge second = edges[inc[1]];
    if (first.v != id) {
      std::swap(first.u, first.v);
      std::reverse(first.geometry.begin(), first.geometry.end());
    }
    if (second.u != id) {
      std::swap(second.u, second.v);
      std::reverse(second.geometry.begin(), second.geometry.end());
    }
    PedEdge merged = first;
    merged.id = std::min(first.id, second.id);
    merged.v = second.v;
    merged.geometry.insert(merged.geometry.end(), second.geometry.begin() + 1, second.geometry.end());
    if (second.provenance == Provenance::Optimized) merged.provenance = Provenance::Optimized;
    edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(inc[1]));
    edges[inc[0]] = std::move(merged);
    removed.insert(id);
  }
  std::sort(edges.begin(), edges.end(), [](const PedEdge& a, const PedEdge& b) { return a.id < b.id; });

  for (const auto& [id, n] : nodes) {
    if (removed.contains(id)) continue;
    PedNode copy = n;
    if (copy.corner && dropped.contains(*copy.corner)) copy.corner.reset();
    out.nodes.push_back(std::move(copy));
  }
  for (PedEdge& e : edges) {
    if (e.geometry.size() < 2) e.geometry = {nodes.at(e.u).local_xy, nodes.at(e.v).local_xy};
    e.geometry.front() = nodes.at(e.u).local_xy;
    e.geometry.back() = nodes.at(e.v).local_xy;
    if (optimized.contains(e.u) || optimized.contains(e.v)) e.provenance = Provenance::Optimized;
    out.edges.push_back(std::move(e));
  }
  return out;
}

EdgeConfidence edge_confidence(const PedEdge& e, const ProbabilityRaster& r, double buffer_m) {
  if (!(buffer_m > 0.0)) throw Error(ErrorKind::Config, "confidence buffer must be positive");
  const char* cls = e.kind == PedEdgeKind::Sidewalk ? "sidewalk" : "crossing";
  const std::size_t plane = r.require_class(cls);
  std::set<std::size_t> seen;
  double sum = 0.0;
  for (std::size_t i = 1; i < e.geometry.size(); ++i) {
    if (e.geometry[i - 1] == e.geometry[i]) continue;
    std::vector<Vec2> px;
    for (Vec2 p : segment_buffer(e.geometry[i - 1], e.geometry[i], buffer_m)) px.push_back(r.world_to_pixel(p));
    const auto bbox = bounding_box(px);
    const int r0 = std::max(0, static_cast<int>(std::floor(bbox.min.y)));
    const int r1 = std::min(r.height - 1, static_cast<int>(std::ceil(bbox.max.y)));
    for (int row = r0; row <= r1; ++row) {
      for (auto [c0, c1] : row_spans(r.width, px, row)) {
        for (int col = c0; col <= c1; ++col) {
          const std::size_t idx = static_cast<std::size_t>(row) * static_cast<std::size_t>(r.width) +
                                  static_cast<std::size_t>(col);
          if (seen.insert(idx).second) sum += r.planes[plane][idx];
        }
      }
    }
  }
  EdgeConfidence out;
  out.pixels = seen.size();
  out.confidence = seen.empty() ? 0.0 : std::clamp(sum / static_cast<double>(seen.size()), 0.0, 1.0);
  return out;
}

RefineResult refine_graph_detailed(const PedestrianGraph& hypo, const ProbabilityRaster& r,
                                   const StreetNetwork& net, const RefineConfig& cfg) {
  if (!hypo.frame.same_as(net.frame) || !LocalFrame(r.anchor).same_as(net.frame)) {
    throw Error(ErrorKind::Frame, "graph, raster and street network do not share a projection anchor");
  }
  if (!(cfg.prune_threshold >= 0.0 && cfg.prune_threshold <= 1.0)) {
    throw Error(ErrorKind::Config, "prune threshold must lie in [0, 1]");
  }
  if (cfg.spsa.iterations < 1) throw Error(ErrorKind::Config, "spsa iterations must be at least 1");
  r.require_class("corner_bulb");

  RefineResult res;
  std::vector<CornerGroup> groups;
  for (NodeId v : find_intersections(net, cfg.min_degree)) {
    for (CornerGroup& cg : group_corner_nodes(hypo, v, net, cfg.group_radius_m)) groups.push_back(std::move(cg));
  }
  res.corners.resize(groups.size());

  const int n = static_cast<int>(groups.size());
  auto run = [&](int i) {
    const CornerGroup& cg = groups[static_cast<std::size_t>(i)];
    CornerReport& rep = res.corners[static_cast<std::size_t>(i)];
    rep.corner = cg.tag;
    rep.node_count = cg.nodes.size();
    if (!cg.optimizable()) {
      rep.skipped = true;
      return;
    }
    const PolygonScore s0 = polygon_score(cg, AffineParams{}, r);
    rep.mu_initial = s0.m == 0 ? 0.0 : s0.g / static_cast<double>(s0.m);
    rep.mu_final = rep.mu_initial;
    if (rep.mu_initial < cfg.prune_threshold) {
      rep.kept = false;
      return;
    }
    if (s0.g < cfg.skip_score) return;
    rep.spsa = spsa_optimize(cg, r, cfg.spsa, corner_stream(cg.tag));
    rep.optimized = true;
    rep.mu_final = mean_polygon_probability(cg, rep.spsa.theta, r);
    if (cfg.post_recheck && rep.mu_final < cfg.prune_threshold) rep.kept = false;
  };
  if (cfg.exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) run(i);
  } else {
    for (int i = 0; i < n; ++i) run(i);
  }

  std::vector<CornerDecision> decisions;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const CornerGroup& cg = groups[i];
    const CornerReport& rep = res.corners[i];
    if (rep.skipped) {
      res.warnings.push_back("corner " + std::to_string(cg.tag.intersection) + "/" + std::to_string(cg.tag.sector) +
                             " has " + std::to_string(cg.nodes.size()) + " nodes; not optimized");
      continue;
    }
    CornerDecision d;
    d.corner = cg.tag;
    d.keep = rep.kept;
    d.mu_p = rep.mu_final;
    if (rep.kept && rep.optimized) {
      const std::vector<Vec2> pos = warped_positions(cg, rep.spsa.theta, r);
      for (std::size_t k = 0; k < cg.nodes.size(); ++k) d.moved[cg.nodes[k]] = pos[k];
    }
    decisions.push_back(std::move(d));
  }

  res.graph = prune_and_rebuild(hypo, decisions, &net);
  for (PedEdge& e : res.graph.edges) {
    const EdgeConfidence c = edge_confidence(e, r, cfg.confidence_buffer_m);
    e.confidence = c.confidence;
    if (c.pixels == 0 && std::find(e.flags.begin(), e.flags.end(), "low_resolution") == e.flags.end()) {
      e.flags.push_back("low_resolution");
    }
  }
  return res;
}

PedestrianGraph refine_graph(const PedestrianGraph& hypo, const ProbabilityRaster& r, const StreetNetwork& net,
                             const RefineConfig& cfg) {
  return refine_graph_detailed(hypo, r, net, cfg).graph;
}

}  // namespace pathweaver
