#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "fixtures.hpp"

namespace oracles {

using namespace pathweaver;

namespace {

double orient(Vec2 a, Vec2 b, Vec2 c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

bool touches_segment(Vec2 p, Vec2 a, Vec2 b) {
  return orient(a, b, p) == 0.0 && p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
         p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y);
}

bool segments_touch(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double o1 = orient(a, b, c), o2 = orient(a, b, d);
  const double o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0))) return true;
  return touches_segment(c, a, b) || touches_segment(d, a, b) || touches_segment(a, c, d) || touches_segment(b, c, d);
}

double shoelace(const std::vector<Vec2>& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec2 a = p[i], b = p[(i + 1) % p.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

}  // namespace

bool inside(Vec2 p, const std::vector<Vec2>& poly) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (touches_segment(p, poly[i], poly[(i + 1) % n])) return false;
  }
  bool in = false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    if ((a.y <= p.y) != (b.y <= p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) in = !in;
    }
  }
  return in;
}

bool simple(const std::vector<Vec2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % n];
    if (a.x == b.x && a.y == b.y) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec2 c = poly[j], d = poly[(j + 1) % n];
      if (j == i + 1 || (i == 0 && j == n - 1)) {
        if (n == 3) continue;
        // Adjacent edges fold back when the far endpoints lie on the same ray from the shared vertex.
        const Vec2 s = j == i + 1 ? b : a;
        const Vec2 u = (j == i + 1 ? a : b) - s;
        const Vec2 v = (j == i + 1 ? d : c) - s;
        if (u.x * v.y - u.y * v.x == 0.0 && u.x * v.x + u.y * v.y > 0.0) return false;
        continue;
      }
      if (segments_touch(a, b, c, d)) return false;
    }
  }
  return true;
}

double corner_score(const CornerGroup& cg, const AffineParams& theta, const ProbabilityRaster& r) {
  std::vector<Vec2> px;
  for (Vec2 p : cg.ring) {
    Vec2 q = theta.apply(r.world_to_pixel(p));
    q.x = std::clamp(q.x, 1e-6, r.width - 1e-6);
    q.y = std::clamp(q.y, 1e-6, r.height - 1e-6);
    px.push_back(q);
  }
  if (!simple(px) || std::abs(shoelace(px)) < 1.0) return 0.0;
  const std::size_t plane = r.require_class("corner_bulb");
  double total = 0.0;
  for (int row = 0; row < r.height; ++row) {
    double s = 0.0;
    for (int col = 0; col < r.width; ++col) {
      if (inside({col + 0.5, row + 0.5}, px)) s += r.at(plane, col, row);
    }
    total += s;
  }
  return total;
}

std::vector<double> betweenness(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  constexpr long kInf = 1 << 20;
  std::vector<std::vector<long>> d(n, std::vector<long>(n, kInf));
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
  for (auto [a, b] : edges) {
    if (a == b) continue;
    adj[a][b] = adj[b][a] = true;
    d[a][b] = d[b][a] = 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  // sigma[s][t]: number of shortest s-t paths, filled by increasing distance.
  std::vector<std::vector<double>> sigma(n, std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    sigma[s][s] = 1.0;
    for (long dist = 1; dist < static_cast<long>(n); ++dist) {
      for (std::size_t t = 0; t < n; ++t) {
        if (d[s][t] != dist) continue;
        for (std::size_t w = 0; w < n; ++w) {
          if (adj[w][t] && d[s][w] == dist - 1) sigma[s][t] += sigma[s][w];
        }
      }
    }
  }
  std::vector<double> bc(n, 0.0);
  std::vector<std::size_t> comp(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = s + 1; t < n; ++t) {
        if (s == v || t == v || d[s][t] >= kInf) continue;
        if (d[s][v] + d[v][t] == d[s][t]) bc[v] += sigma[s][v] * sigma[v][t] / sigma[s][t];
      }
    for (std::size_t u = 0; u < n; ++u) comp[v] += d[v][u] < kInf ? 1 : 0;
  }
  for (std::size_t v = 0; v < n; ++v) {
    const double c = static_cast<double>(comp[v]);
    bc[v] = c < 3 ? 0.0 : bc[v] / ((c - 1) * (c - 2) / 2);
  }
  return bc;
}

ProbabilityRaster disk_raster(int w, int h, Vec2 center, double radius) {
  constexpr PixelTransform kUnit{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  ProbabilityRaster r = ProbabilityRaster::blank(w, h, kUnit, fixtures::kAnchor);
  const std::size_t bulb = r.require_class("corner_bulb");
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const Vec2 c{col + 0.5, row + 0.5};
      if (std::hypot(c.x - center.x, c.y - center.y) < radius) {
        const std::size_t i = static_cast<std::size_t>(row * w + col);
        r.planes[0][i] = 0.0f;
        r.planes[bulb][i] = 1.0f;
      }
    }
  }
  return r;
}

CornerGroup corner_from(std::vector<Vec2> ring) {
  CornerGroup cg;
  cg.tag = {0, 0};
  for (std::size_t i = 0; i < ring.size(); ++i) cg.nodes.push_back(static_cast<NodeId>(i));
  cg.ring = std::move(ring);
  return cg;
}

CornerGroup random_corner(std::mt19937_64& rng, Vec2 center, double rmin, double rmax) {
  std::uniform_int_distribution<int> count(3, 6);
  std::uniform_real_distribution<double> rad(rmin, rmax);
  const int n = count(rng);
  std::vector<Vec2> ring;
  for (int i = 0; i < n; ++i) {
    const double ang = 2.0 * std::numbers::pi * (i + 0.3 * std::uniform_real_distribution<double>(0, 1)(rng)) / n;
    ring.push_back(center + Vec2{std::cos(ang), std::sin(ang)} * rad(rng));
  }
  return corner_from(std::move(ring));
}

PedestrianGraph graph_of(const std::vector<Polyline>& lines) {
  PedestrianGraph g;
  g.frame = LocalFrame(fixtures::kAnchor);
  std::map<std::pair<double, double>, NodeId> ids;
  auto node = [&](Vec2 p) {
    const auto [it, fresh] = ids.emplace(std::make_pair(p.x, p.y), static_cast<NodeId>(g.nodes.size()));
    if (fresh) {
      PedNode n;
      n.id = it->second;
      n.local_xy = p;
      g.nodes.push_back(n);
    }
    return it->second;
  };
  for (const Polyline& l : lines) {
    PedEdge e;
    e.id = static_cast<EdgeId>(g.edges.size());
    e.u = node(l.front());
    e.v = node(l.back());
    e.geometry = l;
    g.edges.push_back(std::move(e));
  }
  return g;
}

PedestrianGraph random_graph(std::mt19937_64& rng, int segments, double extent) {
  std::uniform_int_distribution<int> coord(0, 8);
  std::vector<Polyline> lines;
  const double step = extent / 8.0;
  while (static_cast<int>(lines.size()) < segments) {
    const Vec2 a{coord(rng) * step, coord(rng) * step};
    const Vec2 b{coord(rng) * step, coord(rng) * step};
    if (a == b) continue;
    lines.push_back({a, b});
  }
  return graph_of(lines);
}

VoronoiPartition random_partition(std::mt19937_64& rng, double extent) {
  std::uniform_int_distribution<int> count(1, 7);
  std::uniform_real_distribution<double> c(0.0, extent);
  std::vector<Vec2> sites(static_cast<std::size_t>(count(rng)));
  for (Vec2& s : sites) s = {c(rng), c(rng)};
  return voronoi_partition(sites, Box{{0, 0}, {extent, extent}});
}

}  // namespace oracles
