// Crossing candidates, selection and curb splitting.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pathweaver/error.hpp"
#include "pathweaver/pedestrianfer.hpp"

namespace pathweaver {

double crossing_cost(const CrossingCandidate& c, const CrossingWeights& w) {
  return w.distance * c.dist_to_intersection + w.length * c.length + w.angle * c.angle_dev;
}

namespace {

std::optional<Attachment> nearest_attachment(const SidewalkLayer& layer, HalfEdgeId h, Vec2 p) {
  std::optional<Attachment> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const SidewalkLayer::SegmentRef& ref : layer.segments_of(h)) {
    const SidewalkLine& line = layer.lines[ref.line];
    const ClosestPoint cp = closest_on_segment(p, line.segment_start(ref.segment), line.segment_end(ref.segment));
    if (cp.distance < best_d) {
      best_d = cp.distance;
      best = Attachment{cp.point, ref.line, ref.segment, cp.t};
    }
  }
  return best;
}

bool crosses_other_street(const StreetNetwork& net, EdgeId street, Vec2 a, Vec2 b) {
  const Box box{{std::min(a.x, b.x), std::min(a.y, b.y)}, {std::max(a.x, b.x), std::max(a.y, b.y)}};
  const Polyline seg{a, b};
  for (const StreetEdge& e : net.edges) {
    if (e.id == street) continue;
    const Box eb = bounding_box(e.local_geometry);
    if (eb.max.x < box.min.x || eb.min.x > box.max.x || eb.max.y < box.min.y || eb.min.y > box.max.y) {
      continue;
    }
    if (polylines_intersect(seg, e.local_geometry)) return true;
  }
  return false;
}

/// Arc length along `line` of the point closest to `p`.
double project_arc(const Polyline& line, Vec2 p) {
  double best_d = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const ClosestPoint cp = closest_on_segment(p, line[i], line[i + 1]);
    const double len = distance(line[i], line[i + 1]);
    if (cp.distance < best_d) {
      best_d = cp.distance;
      best_s = s + cp.t * len;
    }
    s += len;
  }
  return best_s;
}

std::optional<CrossingCandidate> make_candidate(const StreetNetwork& net, const SidewalkLayer& layer,
                                                const PedestrianferConfig& cfg, NodeId v,
                                                const HalfEdge& h, double s, Vec2 target) {
  const Vec2 origin = net.node(v).local_xy;
  const auto left = nearest_attachment(layer, h.twin, target);
  const auto right = nearest_attachment(layer, h.id, target);
  if (!left || !right) return std::nullopt;
  if (distance(left->point, origin) > cfg.search_radius_m ||
      distance(right->point, origin) > cfg.search_radius_m) {
    return std::nullopt;
  }
  const Vec2 span = right->point - left->point;
  const double len = norm(span);
  if (len <= 0.0) return std::nullopt;
  if (crosses_other_street(net, h.edge, left->point, right->point)) return std::nullopt;

  CrossingCandidate c;
  c.street = h.edge;
  c.half_edge = h.id;
  c.intersection = v;
  c.sample_point = point_at_length(h.geometry, s);
  c.left = *left;
  c.right = *right;
  c.dist_to_intersection = s;
  c.length = len;
  const double cosang = std::abs(dot(span / len, direction_at_length(h.geometry, s)));
  const double acute = std::acos(std::min(1.0, cosang)) * 180.0 / std::numbers::pi;
  c.angle_dev = std::max(0.0, 90.0 - acute);
  c.cost = crossing_cost(c, cfg.weights);
  return c;
}

}  // namespace

std::vector<CrossingCandidate> generate_crossing_candidates(NodeId intersection,
                                                            const StreetNetwork& net,
                                                            const DirectedStreetGraph& g,
                                                            const SidewalkLayer& sidewalks,
                                                            const PedestrianferConfig& cfg) {
  if (!(cfg.sample_step_m > 0.0)) throw Error(ErrorKind::Config, "sample step must be positive");
  std::vector<CrossingCandidate> out;
  const Vec2 origin = net.node(intersection).local_xy;
  for (HalfEdgeId hid : g.outgoing.at(static_cast<std::size_t>(intersection))) {
    const HalfEdge& h = g.at(hid);
    const double street_len = polyline_length(h.geometry);
    const StreetEdge& street = net.edge(h.edge);

    // Marked crossings nearer to this end of the street replace sampling.
    bool used_marked = false;
    for (const LonLat& m : street.marked_crossings) {
      const Vec2 mp = net.frame.project(m);
      const NodeId other = h.target;
      if (distance(mp, origin) > distance(mp, net.node(other).local_xy)) continue;
      const double s = project_arc(h.geometry, mp);
      if (auto c = make_candidate(net, sidewalks, cfg, intersection, h, s, mp)) {
        c->marked = true;
        c->index = out.size();
        out.push_back(*c);
        used_marked = true;
      }
    }
    if (used_marked) continue;

    for (int k = 0;; ++k) {
      const double s = cfg.sample_start_m + k * cfg.sample_step_m;
      if (s > cfg.sample_max_m + 1e-9 || s >= street_len) break;
      if (auto c = make_candidate(net, sidewalks, cfg, intersection, h, s, point_at_length(h.geometry, s))) {
        c->index = out.size();
        out.push_back(*c);
      }
    }
  }
  return out;
}

std::optional<CrossingCandidate> select_crossing(std::span<const CrossingCandidate> candidates,
                                                 const CrossingWeights& weights) {
  const CrossingCandidate* best = nullptr;
  double best_cost = 0.0;
  for (const CrossingCandidate& c : candidates) {
    const double cost = crossing_cost(c, weights);
    if (!best || cost < best_cost ||
        (cost == best_cost && (c.dist_to_intersection < best->dist_to_intersection ||
                               (c.dist_to_intersection == best->dist_to_intersection && c.index < best->index)))) {
      best = &c;
      best_cost = cost;
    }
  }
  if (!best) return std::nullopt;
  CrossingCandidate out = *best;
  out.cost = best_cost;
  return out;
}

CrossingPieces split_crossing(const CrossingCandidate& c, const Polyline& street, double curb_setback_m,
                              NodeId left_endpoint, NodeId right_endpoint, NodeId first_node_id,
                              EdgeId first_edge_id) {
  const Vec2 a = c.left.point;
  const Vec2 b = c.right.point;
  const double len = distance(a, b);
  CrossingPieces out;
  if (len <= 2.0 * curb_setback_m) {
    PedEdge e;
    e.id = first_edge_id;
    e.u = left_endpoint;
    e.v = right_endpoint;
    e.kind = PedEdgeKind::Crossing;
    e.geometry = {a, b};
    e.crossing = first_edge_id;
    e.flags = {"unsplit"};
    out.edges.push_back(std::move(e));
    out.unsplit = true;
    return out;
  }

  // Midpoint where the crossing meets the centerline, nearest the sample point.
  double t_mid = closest_on_segment(c.sample_point, a, b).t;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < street.size(); ++i) {
    if (auto hit = intersect_segments(a, b, street[i], street[i + 1])) {
      const double d = distance(hit->point, c.sample_point);
      if (d < best) {
        best = d;
        t_mid = hit->t;
      }
    }
  }
  const double lo = curb_setback_m / len;
  t_mid = std::clamp(t_mid, lo, 1.0 - lo);

  const Vec2 dir = (b - a) / len;
  const Vec2 curb_l = a + dir * curb_setback_m;
  const Vec2 curb_r = b - dir * curb_setback_m;
  const Vec2 mid = a + (b - a) * t_mid;

  auto node = [](NodeId id, Vec2 p, PedNodeKind kind) {
    PedNode n;
    n.id = id;
    n.local_xy = p;
    n.kind = kind;
    if (kind == PedNodeKind::Curb) n.curb_state = CurbState::Unknown;
    return n;
  };
  out.nodes.push_back(node(first_node_id, curb_l, PedNodeKind::Curb));
  out.nodes.push_back(node(first_node_id + 1, mid, PedNodeKind::CrossingMidpoint));
  out.nodes.back().street = c.street;
  out.nodes.push_back(node(first_node_id + 2, curb_r, PedNodeKind::Curb));

  auto edge = [&](EdgeId offset, NodeId u, NodeId v, PedEdgeKind kind, Vec2 p, Vec2 q) {
    PedEdge e;
    e.id = first_edge_id + offset;
    e.u = u;
    e.v = v;
    e.kind = kind;
    e.geometry = {p, q};
    e.crossing = first_edge_id;
    return e;
  };
  out.edges.push_back(edge(0, left_endpoint, first_node_id, PedEdgeKind::Link, a, curb_l));
  out.edges.push_back(edge(1, first_node_id, first_node_id + 1, PedEdgeKind::Crossing, curb_l, mid));
  out.edges.push_back(edge(2, first_node_id + 1, first_node_id + 2, PedEdgeKind::Crossing, mid, curb_r));
  out.edges.push_back(edge(3, first_node_id + 2, right_endpoint, PedEdgeKind::Link, curb_r, b));
  return out;
}

}  // namespace pathweaver
