// End-to-end sidewalk/crossing hypothesis assembly.

#include <algorithm>
#include <exception>
#include <limits>
#include <map>
#include <set>

#include "pathweaver/error.hpp"
#include "pathweaver/pedestrianfer.hpp"

namespace pathweaver {

namespace {

struct Anchor {
  double arc = 0.0;
  Vec2 point;
  std::size_t crossing = 0;
  bool left = true;
};

struct LineNode {
  double arc = 0.0;
  NodeId id = 0;
};

std::vector<double> vertex_arcs(const SidewalkLine& line) {
  std::vector<double> arcs{0.0};
  for (std::size_t i = 0; i < line.segment_count(); ++i) {
    arcs.push_back(arcs.back() + distance(line.segment_start(i), line.segment_end(i)));
  }
  return arcs;
}

Vec2 point_on(const SidewalkLine& line, const std::vector<double>& arcs, double s) {
  for (std::size_t i = 0; i < line.segment_count(); ++i) {
    if (s <= arcs[i + 1] || i + 1 == line.segment_count()) {
      const double len = arcs[i + 1] - arcs[i];
      const double t = len > 0.0 ? std::clamp((s - arcs[i]) / len, 0.0, 1.0) : 0.0;
      return line.segment_start(i) + (line.segment_end(i) - line.segment_start(i)) * t;
    }
  }
  return line.points.front();
}

/// Sub-polyline between arc lengths a < b; for closed lines b may exceed the
/// total length to wrap past the first vertex.
Polyline extract(const SidewalkLine& line, const std::vector<double>& arcs, double a, double b) {
  const double total = arcs.back();
  Polyline out;
  auto push = [&](Vec2 p) {
    if (out.empty() || distance(out.back(), p) > 1e-9) out.push_back(p);
  };
  auto walk = [&](double from, double to) {
    push(point_on(line, arcs, from));
    for (std::size_t i = 1; i + 1 < arcs.size(); ++i) {
      if (arcs[i] > from && arcs[i] < to) push(line.points[i % line.points.size()]);
    }
    push(point_on(line, arcs, to));
  };
  if (b <= total + 1e-12) {
    walk(a, b);
  } else {
    walk(a, total);
    walk(0.0, b - total);
  }
  return out;
}

}  // namespace

Hypothesis hypothesize_detailed(const StreetNetwork& net, const PedestrianferConfig& cfg) {
  if (!(cfg.default_offset_m > 0.0)) throw Error(ErrorKind::Config, "sidewalk offset must be positive");
  Hypothesis hyp;
  hyp.graph.frame = net.frame;
  const DirectedStreetGraph g = build_directed(net);
  const SidewalkLayer layer = build_sidewalks(net, g, cfg);
  hyp.degenerate_faces = layer.degenerate_faces;
  for (std::size_t f : layer.degenerate_faces) {
    hyp.warnings.push_back("face " + std::to_string(f) + ": offset curve collapsed");
  }

  const std::vector<NodeId> intersections = find_intersections(net, cfg.min_degree);
  std::vector<std::vector<CrossingCandidate>> per_node(intersections.size());
  std::vector<std::exception_ptr> failures(intersections.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(intersections.size()); ++i) {
    try {
      const auto cands = generate_crossing_candidates(intersections[i], net, g, layer, cfg);
      std::map<HalfEdgeId, std::vector<CrossingCandidate>> by_street;
      for (const CrossingCandidate& c : cands) by_street[c.half_edge].push_back(c);
      for (const auto& [h, group] : by_street) {
        if (auto best = select_crossing(group, cfg.weights)) per_node[i].push_back(*best);
      }
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  std::vector<CrossingCandidate> crossings;
  for (auto& list : per_node) crossings.insert(crossings.end(), list.begin(), list.end());

  // Marked crossings whose nearer street end is not an intersection stand alone.
  const std::set<NodeId> is_intersection(intersections.begin(), intersections.end());
  for (const StreetEdge& e : net.edges) {
    for (const LonLat& m : e.marked_crossings) {
      const Vec2 mp = net.frame.project(m);
      const bool from_nearer = distance(mp, net.node(e.from).local_xy) <= distance(mp, net.node(e.to).local_xy);
      const NodeId end = from_nearer ? e.from : e.to;
      if (is_intersection.contains(end)) continue;
      const HalfEdge& h = g.at(from_nearer ? 2 * e.id : 2 * e.id + 1);
      PedestrianferConfig local = cfg;
      local.search_radius_m = std::numeric_limits<double>::infinity();
      // Only the marked candidate from this street end is used.
      auto cands = generate_crossing_candidates(end, net, g, layer, local);
      bool found = false;
      for (CrossingCandidate& c : cands) {
        if (c.half_edge == h.id && c.marked) {
          crossings.push_back(c);
          found = true;
          break;
        }
      }
      if (!found) hyp.warnings.push_back("marked crossing on street " + std::to_string(e.id) + " has no sidewalk on both sides");
    }
  }

  // Attachment anchors per sidewalk line.
  std::vector<std::vector<Anchor>> anchors(layer.lines.size());
  std::vector<std::vector<double>> arcs(layer.lines.size());
  for (std::size_t l = 0; l < layer.lines.size(); ++l) arcs[l] = vertex_arcs(layer.lines[l]);
  for (std::size_t c = 0; c < crossings.size(); ++c) {
    for (bool left : {true, false}) {
      const Attachment& at = left ? crossings[c].left : crossings[c].right;
      const auto& a = arcs[at.line];
      const double arc = a[at.segment] + (a[at.segment + 1] - a[at.segment]) * at.t;
      anchors[at.line].push_back({arc, at.point, c, left});
    }
  }

  PedestrianGraph& out = hyp.graph;
  NodeId next_node = 0;
  EdgeId next_edge = 0;
  std::vector<NodeId> left_node(crossings.size(), -1);
  std::vector<NodeId> right_node(crossings.size(), -1);

  auto corner_for = [&](NodeId intersection, Vec2 p) {
    const std::vector<double> bearings = street_bearings_at(net, intersection);
    return CornerTag{intersection, sector_of(bearings, bearing_deg(net.node(intersection).local_xy, p))};
  };

  const double merge = cfg.offset.min_length_m;
  for (std::size_t l = 0; l < layer.lines.size(); ++l) {
    const SidewalkLine& line = layer.lines[l];
    const std::vector<double>& a = arcs[l];
    const double total = a.back();
    auto& list = anchors[l];
    std::stable_sort(list.begin(), list.end(), [](const Anchor& x, const Anchor& y) { return x.arc < y.arc; });

    std::vector<LineNode> nodes;
    auto add_node = [&](double arc, Vec2 p, std::optional<CornerTag> corner) {
      PedNode n;
      n.id = next_node++;
      n.local_xy = p;
      n.kind = PedNodeKind::SidewalkEndpoint;
      n.corner = corner;
      out.nodes.push_back(n);
      nodes.push_back({arc, n.id});
      return n.id;
    };

    if (!line.closed) add_node(0.0, line.points.front(), std::nullopt);
    for (std::size_t i = 0; i < list.size(); ++i) {
      const Anchor& an = list[i];
      const CrossingCandidate& c = crossings[an.crossing];
      NodeId id;
      if (!nodes.empty() && an.arc - nodes.back().arc < merge) {
        id = nodes.back().id;
      } else if (line.closed && !nodes.empty() && nodes.front().arc + total - an.arc < merge) {
        id = nodes.front().id;
      } else {
        id = add_node(an.arc, an.point, corner_for(c.intersection, an.point));
      }
      PedNode* n = out.find_node(id);
      if (!n->corner) n->corner = corner_for(c.intersection, n->local_xy);
      (an.left ? left_node : right_node)[an.crossing] = id;
    }
    if (!line.closed) {
      if (total - nodes.back().arc < merge && nodes.size() > 1) {
        // Last attachment sits on the line end; it doubles as the endpoint.
      } else {
        add_node(total, line.points.back(), std::nullopt);
      }
    } else if (nodes.size() == 0) {
      add_node(0.0, line.points.front(), std::nullopt);
      add_node(total / 2.0, point_on(line, a, total / 2.0), std::nullopt);
    } else if (nodes.size() == 1) {
      double arc = nodes.front().arc + total / 2.0;
      if (arc >= total) arc -= total;
      add_node(arc, point_on(line, a, arc), std::nullopt);
      std::sort(nodes.begin(), nodes.end(), [](const LineNode& x, const LineNode& y) { return x.arc < y.arc; });
    }

    const std::size_t k = nodes.size();
    const std::size_t spans = line.closed ? k : k - 1;
    for (std::size_t i = 0; i < spans; ++i) {
      const LineNode& u = nodes[i];
      const LineNode& v = nodes[(i + 1) % k];
      const double end = (i + 1 < k) ? v.arc : v.arc + total;
      Polyline geom = extract(line, a, u.arc, end);
      if (geom.size() < 2) continue;
      geom.front() = out.find_node(u.id)->local_xy;
      geom.back() = out.find_node(v.id)->local_xy;
      if (polyline_length(geom) <= 0.0) continue;
      PedEdge e;
      e.id = next_edge++;
      e.u = u.id;
      e.v = v.id;
      e.kind = PedEdgeKind::Sidewalk;
      e.geometry = std::move(geom);
      out.edges.push_back(std::move(e));
    }
  }

  for (std::size_t c = 0; c < crossings.size(); ++c) {
    CrossingCandidate cand = crossings[c];
    cand.left.point = out.find_node(left_node[c])->local_xy;
    cand.right.point = out.find_node(right_node[c])->local_xy;
    if (distance(cand.left.point, cand.right.point) <= 0.0) continue;
    const CrossingPieces pieces = split_crossing(cand, net.edge(cand.street).local_geometry,
                                                 cfg.curb_setback_m, left_node[c], right_node[c],
                                                 next_node, next_edge);
    const bool at_intersection = is_intersection.contains(cand.intersection);
    for (PedNode n : pieces.nodes) {
      if (n.kind == PedNodeKind::Curb && at_intersection) n.corner = corner_for(cand.intersection, n.local_xy);
      out.nodes.push_back(n);
    }
    for (const PedEdge& e : pieces.edges) out.edges.push_back(e);
    next_node += static_cast<NodeId>(pieces.nodes.size());
    next_edge += static_cast<EdgeId>(pieces.edges.size());
    if (pieces.unsplit) ++hyp.unsplit_crossings;
  }

  // Standalone sidewalk-end nodes carry no corner.
  for (PedNode& n : out.nodes) {
    if (n.corner && !is_intersection.contains(n.corner->intersection)) n.corner.reset();
  }
  out.check_integrity();
  return hyp;
}

PedestrianGraph hypothesize(const StreetNetwork& net, const PedestrianferConfig& cfg) {
  return hypothesize_detailed(net, cfg).graph;
}

}  // namespace pathweaver
