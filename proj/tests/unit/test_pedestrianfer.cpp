#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "pathweaver/error.hpp"
#include "pathweaver/pedestrianfer.hpp"

using namespace pathweaver;

namespace {

// Brute-force check over every pair of non-adjacent segments.
bool self_intersects(const SidewalkLine& line) {
  const std::size_t n = line.segment_count();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (line.closed && i == 0 && j == n - 1);
      if (adjacent) continue;
      if (intersect_segments(line.segment_start(i), line.segment_end(i), line.segment_start(j),
                             line.segment_end(j))) {
        return true;
      }
    }
  }
  return false;
}

std::size_t count_interior(const std::vector<ClosedPath>& faces) {
  return static_cast<std::size_t>(std::count_if(faces.begin(), faces.end(), [](const ClosedPath& f) {
    return f.orientation == FaceOrientation::Interior;
  }));
}

std::size_t count_nodes(const PedestrianGraph& g, PedNodeKind k) {
  return static_cast<std::size_t>(
      std::count_if(g.nodes.begin(), g.nodes.end(), [&](const PedNode& n) { return n.kind == k; }));
}

std::size_t count_edges(const PedestrianGraph& g, PedEdgeKind k) {
  return static_cast<std::size_t>(
      std::count_if(g.edges.begin(), g.edges.end(), [&](const PedEdge& e) { return e.kind == k; }));
}

std::set<std::int64_t> crossing_groups(const PedestrianGraph& g) {
  std::set<std::int64_t> out;
  for (const PedEdge& e : g.edges) {
    if (e.crossing) out.insert(*e.crossing);
  }
  return out;
}

CrossingCandidate make(double dist, double len, double dev, std::size_t index) {
  CrossingCandidate c;
  c.dist_to_intersection = dist;
  c.length = len;
  c.angle_dev = dev;
  c.index = index;
  return c;
}

}  // namespace

TEST_CASE("face walks: single edge and square") {
  {
    const auto faces = enumerate_rht_faces(build_directed(fixtures::load(fixtures::single())));
    REQUIRE(faces.size() == 1);
    CHECK(faces[0].half_edges.size() == 2);
    CHECK(faces[0].orientation == FaceOrientation::Outer);
  }
  {
    const auto faces = enumerate_rht_faces(build_directed(fixtures::load(fixtures::square())));
    REQUIRE(faces.size() == 2);
    CHECK(count_interior(faces) == 1);
    for (const auto& f : faces) {
      if (f.orientation == FaceOrientation::Interior) CHECK(f.signed_area_m2 == doctest::Approx(-1e4).epsilon(1e-6));
    }
  }
}

TEST_CASE("interior face count on grids") {
  for (int m = 2; m <= 8; ++m) {
    for (int n = 2; n <= 8; ++n) {
      const auto faces = enumerate_rht_faces(build_directed(fixtures::load(fixtures::grid(m, n))));
      CHECK(count_interior(faces) == static_cast<std::size_t>((m - 1) * (n - 1)));
      CHECK(faces.size() == static_cast<std::size_t>((m - 1) * (n - 1) + 1));
    }
  }
}

TEST_CASE("face ordering is by smallest half-edge id") {
  const auto faces = enumerate_rht_faces(build_directed(fixtures::load(fixtures::grid(3, 4))));
  std::vector<HalfEdgeId> firsts;
  for (const auto& f : faces) firsts.push_back(*std::min_element(f.half_edges.begin(), f.half_edges.end()));
  CHECK(std::is_sorted(firsts.begin(), firsts.end()));
}

TEST_CASE("offset of a single street is parallel at the offset distance") {
  const auto net = fixtures::load(fixtures::single());
  const auto g = build_directed(net);
  const auto faces = enumerate_rht_faces(g);
  const auto r = offset_sidewalk(faces[0], g, 4.0);
  REQUIRE(r.lines.size() == 1);
  const auto& line = r.lines[0];
  CHECK(line.closed);
  // Every point produced by a street segment (not a cap) is 4 m off the centerline.
  for (std::size_t i = 0; i < line.segment_count(); ++i) {
    if (line.sources[i] == kJoinSegment) continue;
    CHECK(point_segment_distance(line.segment_start(i), {0, 0}, {100, 0}) == doctest::Approx(4.0));
    CHECK(point_segment_distance(line.segment_end(i), {0, 0}, {100, 0}) == doctest::Approx(4.0));
    const Vec2 d = line.segment_end(i) - line.segment_start(i);
    CHECK(std::abs(d.y) < 1e-9);
    CHECK(std::abs(d.x) == doctest::Approx(100.0));
  }
  CHECK_FALSE(self_intersects(line));
}

TEST_CASE("square block offset shrinks to a 92 m square") {
  const auto net = fixtures::load(fixtures::square());
  const auto g = build_directed(net);
  for (const auto& f : enumerate_rht_faces(g)) {
    if (f.orientation != FaceOrientation::Interior) continue;
    const auto r = offset_sidewalk(f, g, 4.0);
    REQUIRE(r.lines.size() == 1);
    const auto& pts = r.lines[0].points;
    CHECK(pts.size() == 4);
    CHECK(signed_area(pts) == doctest::Approx(-92.0 * 92.0));
    for (Vec2 p : pts) {
      CHECK((std::abs(p.x - 4.0) < 1e-6 || std::abs(p.x - 96.0) < 1e-6));
      CHECK((std::abs(p.y - 4.0) < 1e-6 || std::abs(p.y - 96.0) < 1e-6));
    }
  }
}

TEST_CASE("offset larger than the block collapses and is flagged") {
  const auto net = fixtures::load(fixtures::square(6.0));
  const auto g = build_directed(net);
  for (const auto& f : enumerate_rht_faces(g)) {
    if (f.orientation != FaceOrientation::Interior) continue;
    const auto r = offset_sidewalk(f, g, 4.0);
    CHECK(r.lines.empty());
    CHECK(r.degenerate);
  }
  CHECK_THROWS_AS(offset_sidewalk(enumerate_rht_faces(g)[0], g, 0.0), Error);
}

TEST_CASE("L-shaped layouts trim to simple offset curves") {
  // Concave L-shaped block plus the two-street corner; both produce offset
  // self-intersections that must be trimmed.
  const std::vector<fixtures::Street> lblock{
      {{{0, 0}, {100, 0}}}, {{{100, 0}, {100, 40}}}, {{{100, 40}, {40, 40}}},
      {{{40, 40}, {40, 100}}}, {{{40, 100}, {0, 100}}}, {{{0, 100}, {0, 0}}}};
  for (const auto& streets : {lblock, fixtures::ell(), fixtures::ell(6.0)}) {
    const auto net = fixtures::load(streets);
    const auto g = build_directed(net);
    for (const auto& f : enumerate_rht_faces(g)) {
      const auto r = offset_sidewalk(f, g, 4.0);
      for (const auto& line : r.lines) {
        CHECK_FALSE(self_intersects(line));
        CHECK(line.length() >= 0.5);
        if (line.closed) {
          const double area = signed_area(line.points);
          CHECK((f.orientation == FaceOrientation::Interior ? area < 0 : area > 0));
        }
      }
    }
  }
}

TEST_CASE("concave block offset keeps its inner corner") {
  const std::vector<fixtures::Street> lblock{
      {{{0, 0}, {100, 0}}}, {{{100, 0}, {100, 40}}}, {{{100, 40}, {40, 40}}},
      {{{40, 40}, {40, 100}}}, {{{40, 100}, {0, 100}}}, {{{0, 100}, {0, 0}}}};
  const auto net = fixtures::load(lblock);
  const auto g = build_directed(net);
  for (const auto& f : enumerate_rht_faces(g)) {
    if (f.orientation != FaceOrientation::Interior) continue;
    const auto r = offset_sidewalk(f, g, 4.0);
    REQUIRE(r.lines.size() == 1);
    // Reflex corner mitered (4*sqrt(2) < 2*offset): the offset ring is the
    // L with corners (4,4) (96,4) (96,36) (36,36) (36,96) (4,96).
    const Polygon expected{{4, 4}, {96, 4}, {96, 36}, {36, 36}, {36, 96}, {4, 96}};
    CHECK(std::abs(signed_area(r.lines[0].points)) == doctest::Approx(std::abs(signed_area(expected))));
    CHECK(r.lines[0].points.size() == 6);
    for (Vec2 p : r.lines[0].points) {
      CHECK(std::any_of(expected.begin(), expected.end(), [&](Vec2 q) { return distance(p, q) < 1e-6; }));
    }
  }
}

TEST_CASE("crossing candidates on the plus fixture") {
  const auto net = fixtures::load(fixtures::plus());
  const auto g = build_directed(net);
  PedestrianferConfig cfg;
  const auto layer = build_sidewalks(net, g, cfg);
  const NodeId center = find_intersections(net)[0];
  const auto cands = generate_crossing_candidates(center, net, g, layer, cfg);

  // Oracle: for each street and each sample s in 2..24, the symmetric
  // candidate spans +-offset across the street at distance s; it survives
  // unless it touches a perpendicular street (which lie at distance 0).
  std::map<HalfEdgeId, int> expected;
  for (HalfEdgeId h : g.outgoing[static_cast<std::size_t>(center)]) {
    int n = 0;
    for (double s = 2.0; s <= 25.0; s += 2.0) n += s > 0.0 ? 1 : 0;
    expected[h] = n;
  }
  std::map<HalfEdgeId, int> got;
  for (const auto& c : cands) got[c.half_edge]++;
  CHECK(got == expected);
  CHECK(expected.begin()->second == 12);

  for (const auto& c : cands) {
    CHECK(c.dist_to_intersection >= 0.0);
    CHECK(c.length >= 0.0);
    CHECK(c.angle_dev >= 0.0);
    CHECK(c.cost == doctest::Approx(c.dist_to_intersection + c.length + 0.5 * c.angle_dev));
  }

  const HalfEdge* north = nullptr;
  for (HalfEdgeId h : g.outgoing[static_cast<std::size_t>(center)]) {
    if (std::abs(g.at(h).bearing_deg) < 1e-9) north = &g.at(h);
  }
  REQUIRE(north);
  const auto it = std::find_if(cands.begin(), cands.end(), [&](const CrossingCandidate& c) {
    return c.half_edge == north->id && c.dist_to_intersection == 2.0;
  });
  REQUIRE(it != cands.end());
  CHECK(it->angle_dev == doctest::Approx(0.0));
  CHECK(it->length == doctest::Approx(8.0));
  CHECK(it->left.point.x < 0.0);
  CHECK(it->right.point.x > 0.0);
}

TEST_CASE("street with a sidewalk on one side gets no candidates") {
  auto streets = fixtures::plus();
  for (auto& s : streets) {
    s.left = true;
    s.right = true;
  }
  streets[0].right = false;  // north arm, drawn outward from the center
  const auto net = fixtures::load(streets);
  const auto g = build_directed(net);
  PedestrianferConfig cfg;
  cfg.regime = SidewalkRegime::Metadata;
  const auto layer = build_sidewalks(net, g, cfg);
  const NodeId center = find_intersections(net)[0];
  const auto cands = generate_crossing_candidates(center, net, g, layer, cfg);
  std::set<EdgeId> streets_with;
  for (const auto& c : cands) streets_with.insert(c.street);
  CHECK(streets_with.size() == 3);
  CHECK_FALSE(streets_with.contains(0));
}

TEST_CASE("select_crossing") {
  const CrossingWeights w;
  SUBCASE("dominance on distance") {
    std::vector<CrossingCandidate> c{make(10, 8, 0, 0), make(2, 8, 0, 1)};
    for (double w1 : {0.01, 1.0, 50.0}) {
      CrossingWeights ww{w1, 1.0, 0.5};
      CHECK(select_crossing(c, ww)->dist_to_intersection == 2.0);
    }
  }
  SUBCASE("hand-computed linear combination") {
    std::vector<CrossingCandidate> c{make(2, 10, 30, 0), make(6, 8, 0, 1)};
    CHECK(crossing_cost(c[0], w) == doctest::Approx(27.0));
    CHECK(crossing_cost(c[1], w) == doctest::Approx(14.0));
    CHECK(select_crossing(c, w)->index == 1);
  }
  SUBCASE("ties go to smaller distance then index") {
    std::vector<CrossingCandidate> c{make(4, 6, 0, 0), make(2, 8, 0, 1), make(2, 8, 0, 2)};
    CHECK(select_crossing(c, w)->index == 1);
  }
  SUBCASE("empty list") { CHECK_FALSE(select_crossing({}, w).has_value()); }
  SUBCASE("argmin invariant under positive rescaling") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 30.0);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<CrossingCandidate> c;
      for (std::size_t i = 0; i < 8; ++i) c.push_back(make(u(rng), u(rng), u(rng), i));
      CrossingWeights base{u(rng) + 0.1, u(rng) + 0.1, u(rng) + 0.1};
      const double k = scale(rng);
      CrossingWeights scaled{base.distance * k, base.length * k, base.angle * k};
      CHECK(select_crossing(c, base)->index == select_crossing(c, scaled)->index);
    }
  }
}

TEST_CASE("split_crossing") {
  CrossingCandidate c;
  c.street = 3;
  c.left.point = {-5, 10};
  c.right.point = {5, 10};
  c.sample_point = {0, 10};
  const Polyline street{{0, 0}, {0, 100}};
  SUBCASE("10 m crossing") {
    const auto p = split_crossing(c, street, 1.5, 100, 101, 200, 300);
    REQUIRE(p.nodes.size() == 3);
    REQUIRE(p.edges.size() == 4);
    CHECK_FALSE(p.unsplit);
    CHECK(p.edges[0].kind == PedEdgeKind::Link);
    CHECK(p.edges[1].kind == PedEdgeKind::Crossing);
    CHECK(p.edges[2].kind == PedEdgeKind::Crossing);
    CHECK(p.edges[3].kind == PedEdgeKind::Link);
    CHECK(p.edges[0].length() == doctest::Approx(1.5));
    CHECK(p.edges[1].length() == doctest::Approx(3.5));
    CHECK(p.edges[2].length() == doctest::Approx(3.5));
    CHECK(p.edges[3].length() == doctest::Approx(1.5));
    CHECK(p.edges[0].u == 100);
    CHECK(p.edges[3].v == 101);
    CHECK(p.nodes[0].curb_state == CurbState::Unknown);
    CHECK(p.nodes[2].curb_state == CurbState::Unknown);
    CHECK(p.nodes[1].kind == PedNodeKind::CrossingMidpoint);
    CHECK(p.nodes[1].street == 3);
    for (const auto& e : p.edges) CHECK(e.crossing == 300);
  }
  SUBCASE("short crossing is left unsplit") {
    c.left.point = {-1.25, 10};
    c.right.point = {1.25, 10};
    const auto p = split_crossing(c, street, 1.5, 100, 101, 200, 300);
    CHECK(p.unsplit);
    CHECK(p.nodes.empty());
    REQUIRE(p.edges.size() == 1);
    CHECK(p.edges[0].flags == std::vector<std::string>{"unsplit"});
  }
  SUBCASE("midpoint lies on the centerline for orthogonal crossings") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * 3.141592653589793);
    std::uniform_real_distribution<double> u(4.0, 20.0);
    for (int trial = 0; trial < 100; ++trial) {
      const double th = ang(rng);
      const Vec2 d{std::cos(th), std::sin(th)};
      const Vec2 n{-d.y, d.x};
      const Vec2 o{u(rng), u(rng)};
      const Polyline st{o, o + d * 60.0};
      const double s = u(rng);
      CrossingCandidate k;
      k.sample_point = o + d * s;
      k.left.point = k.sample_point + n * u(rng);
      k.right.point = k.sample_point - n * u(rng);
      const auto p = split_crossing(k, st, 1.5, 0, 1, 2, 0);
      REQUIRE(p.nodes.size() == 3);
      CHECK(point_segment_distance(p.nodes[1].local_xy, st[0], st[1]) < 1e-6);
    }
  }
}

TEST_CASE("hypothesize on the plus fixture") {
  const auto net = fixtures::load(fixtures::plus());
  const auto g = hypothesize(net);
  CHECK(count_edges(g, PedEdgeKind::Sidewalk) == 4);
  CHECK(crossing_groups(g).size() == 4);
  CHECK(count_nodes(g, PedNodeKind::Curb) == 8);
  CHECK(count_nodes(g, PedNodeKind::CrossingMidpoint) == 4);
  CHECK(count_edges(g, PedEdgeKind::Crossing) == 8);
  CHECK(count_edges(g, PedEdgeKind::Link) == 8);
  for (const auto& n : g.nodes) CHECK(n.provenance == Provenance::Hypothesized);
  for (const auto& e : g.edges) CHECK(e.provenance == Provenance::Hypothesized);

  // Crossing midpoints sit on the street they cross.
  for (const auto& n : g.nodes) {
    if (n.kind != PedNodeKind::CrossingMidpoint) continue;
    const auto& st = net.edge(*n.street).local_geometry;
    CHECK(point_segment_distance(n.local_xy, st.front(), st.back()) < 1e-6);
  }
}

TEST_CASE("metadata regime: left-only single street") {
  fixtures::Street s{{{0, 0}, {100, 0}}, true, false};
  const auto net = fixtures::load({s});
  PedestrianferConfig cfg;
  cfg.regime = SidewalkRegime::Metadata;
  const auto hyp = hypothesize_detailed(net, cfg);
  CHECK(count_edges(hyp.graph, PedEdgeKind::Sidewalk) == 1);
  CHECK(count_edges(hyp.graph, PedEdgeKind::Crossing) == 0);
  for (const auto& e : hyp.graph.edges) {
    for (Vec2 p : e.geometry) CHECK(p.y == doctest::Approx(4.0));  // left of an eastbound street
  }
}

TEST_CASE("marked crossing overrides sampling") {
  auto streets = fixtures::plus();
  streets[0].marked = {{0.3, 5.0}};
  const auto net = fixtures::load(streets);
  const auto g = hypothesize(net);
  bool found = false;
  for (const auto& e : g.edges) {
    if (e.kind != PedEdgeKind::Crossing) continue;
    for (std::size_t i = 0; i + 1 < e.geometry.size(); ++i) {
      if (point_segment_distance({0.3, 5.0}, e.geometry[i], e.geometry[i + 1]) <= 1.0) found = true;
    }
  }
  CHECK(found);
  CHECK(crossing_groups(g).size() == 4);
}

TEST_CASE("assembly invariants on grids") {
  for (int m = 2; m <= 4; ++m) {
    for (int n = 2; n <= 4; ++n) {
      const auto net = fixtures::load(fixtures::grid(m, n));
      const auto g = hypothesize(net);
      g.check_integrity();

      std::map<NodeId, std::pair<int, int>> curb_incidence;  // links, crossings
      for (const auto& e : g.edges) {
        for (NodeId id : {e.u, e.v}) {
          const PedNode* node = g.find_node(id);
          REQUIRE(node);
          if (node->kind != PedNodeKind::Curb) continue;
          if (e.kind == PedEdgeKind::Link) curb_incidence[id].first++;
          if (e.kind == PedEdgeKind::Crossing) curb_incidence[id].second++;
        }
        if (e.kind == PedEdgeKind::Link) {
          const auto ku = g.find_node(e.u)->kind;
          const auto kv = g.find_node(e.v)->kind;
          CHECK(((ku == PedNodeKind::SidewalkEndpoint && kv == PedNodeKind::Curb) ||
                 (kv == PedNodeKind::SidewalkEndpoint && ku == PedNodeKind::Curb)));
        }
        if (e.kind == PedEdgeKind::Crossing && e.flags.empty()) {
          const auto ku = g.find_node(e.u)->kind;
          const auto kv = g.find_node(e.v)->kind;
          CHECK(((ku == PedNodeKind::Curb && kv == PedNodeKind::CrossingMidpoint) ||
                 (kv == PedNodeKind::Curb && ku == PedNodeKind::CrossingMidpoint)));
        }
        CHECK(e.length() > 0.0);
      }
      CHECK(count_nodes(g, PedNodeKind::Curb) == curb_incidence.size());
      for (const auto& [id, inc] : curb_incidence) {
        CHECK(inc.first == 1);
        CHECK(inc.second == 1);
      }

      // No sidewalk touches a street centerline.
      for (const auto& e : g.edges) {
        if (e.kind != PedEdgeKind::Sidewalk) continue;
        for (const auto& st : net.edges) CHECK_FALSE(polylines_intersect(e.geometry, st.local_geometry));
      }

      // No duplicate positions among nodes of one kind.
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        for (std::size_t j = i + 1; j < g.nodes.size(); ++j) {
          if (g.nodes[i].kind != g.nodes[j].kind) continue;
          CHECK(distance(g.nodes[i].local_xy, g.nodes[j].local_xy) > 1e-3);
        }
      }
    }
  }
}

TEST_CASE("hypothesize is deterministic") {
  const auto net = fixtures::load(fixtures::grid(3, 4));
  const auto a = write_graph_geojson(hypothesize(net));
  const auto b = write_graph_geojson(hypothesize(net));
  CHECK(a == b);
}
