#include "fixtures.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include <json.hpp>

namespace fixtures {

using nlohmann::json;
using namespace pathweaver;

std::string streets_geojson(const std::vector<Street>& streets, LonLat anchor) {
  const LocalFrame frame(anchor);
  json features = json::array();
  for (const Street& s : streets) {
    json coords = json::array();
    for (Vec2 p : s.xy) {
      const LonLat q = frame.unproject(p);
      coords.push_back({q.lon, q.lat});
    }
    json props = json::object();
    if (s.left) props["sidewalk_left"] = *s.left;
    if (s.right) props["sidewalk_right"] = *s.right;
    if (s.offset_m) props["sidewalk_offset_m"] = *s.offset_m;
    if (!s.marked.empty()) {
      json m = json::array();
      for (Vec2 p : s.marked) {
        const LonLat q = frame.unproject(p);
        m.push_back({q.lon, q.lat});
      }
      props["marked_crossings"] = m;
    }
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                        {"properties", props}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump();
}

StreetNetwork load(const std::vector<Street>& streets, LonLat anchor) {
  LoadOptions opt;
  opt.anchor = anchor;
  return load_street_network(streets_geojson(streets, anchor), opt);
}

std::vector<Street> grid(int rows, int cols, double spacing) {
  std::vector<Street> out;
  auto at = [&](int r, int c) { return Vec2{c * spacing, r * spacing}; };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) out.push_back({{at(r, c), at(r, c + 1)}});
  }
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r + 1 < rows; ++r) out.push_back({{at(r, c), at(r + 1, c)}});
  }
  return out;
}

std::vector<Street> plus(double arm) {
  return {{{{0, 0}, {0, arm}}}, {{{0, 0}, {arm, 0}}}, {{{0, 0}, {0, -arm}}}, {{{0, 0}, {-arm, 0}}}};
}

std::vector<Street> tee(double arm) {
  return {{{{-arm, 0}, {0, 0}}}, {{{0, 0}, {arm, 0}}}, {{{0, 0}, {0, -arm}}}};
}

std::vector<Street> ell(double arm) { return {{{{0, arm}, {0, 0}}}, {{{0, 0}, {arm, 0}}}}; }

std::vector<Street> square(double side) {
  return {{{{0, 0}, {side, 0}}}, {{{side, 0}, {side, side}}}, {{{side, side}, {0, side}}}, {{{0, side}, {0, 0}}}};
}

std::vector<Street> single(double length) { return {{{{0, 0}, {length, 0}}}}; }

PedestrianGraph jitter(const PedestrianGraph& g, double max_m, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PedestrianGraph out = g;
  std::map<NodeId, Vec2> moved;
  for (PedNode& n : out.nodes) {
    const double ang = 2.0 * std::numbers::pi * unit(rng);
    const double r = max_m * std::sqrt(unit(rng));
    const Vec2 d{r * std::cos(ang), r * std::sin(ang)};
    n.local_xy += d;
    moved[n.id] = d;
  }
  for (PedEdge& e : out.edges) {
    e.geometry.front() += moved[e.u];
    e.geometry.back() += moved[e.v];
  }
  return out;
}

}  // namespace fixtures

namespace fixtures {

PedestrianGraph jitter_corners(const PedestrianGraph& g, double max_m, unsigned seed,
                               const pathweaver::StreetNetwork* net) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::map<pathweaver::CornerTag, Vec2> shift;
  for (const PedNode& n : g.nodes) {
    if (!n.corner || shift.contains(*n.corner)) continue;
    const double ang = 2.0 * std::numbers::pi * unit(rng);
    const double r = max_m * std::sqrt(unit(rng));
    shift[*n.corner] = {r * std::cos(ang), r * std::sin(ang)};
  }
  std::map<pathweaver::CornerTag, pathweaver::CornerDecision> by_corner;
  for (const PedNode& n : g.nodes) {
    if (!n.corner) continue;
    auto& d = by_corner[*n.corner];
    d.corner = *n.corner;
    d.moved[n.id] = n.local_xy + shift.at(*n.corner);
  }
  std::vector<pathweaver::CornerDecision> decisions;
  for (auto& [tag, d] : by_corner) decisions.push_back(std::move(d));
  PedestrianGraph out = pathweaver::prune_and_rebuild(g, decisions, net);
  for (PedNode& n : out.nodes) n.provenance = pathweaver::Provenance::Hypothesized;
  for (pathweaver::PedEdge& e : out.edges) e.provenance = pathweaver::Provenance::Hypothesized;
  return out;
}

}  // namespace fixtures
