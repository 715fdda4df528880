// Face walks and sidewalk offsetting.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pathweaver/error.hpp"
#include "pathweaver/pedestrianfer.hpp"

namespace pathweaver {

std::vector<ClosedPath> enumerate_rht_faces(const DirectedStreetGraph& g) {
  std::vector<ClosedPath> faces;
  std::vector<bool> visited(g.half_edges.size(), false);
  for (const HalfEdge& start : g.half_edges) {
    if (visited[static_cast<std::size_t>(start.id)]) continue;
    ClosedPath path;
    HalfEdgeId cur = start.id;
    do {
      visited[static_cast<std::size_t>(cur)] = true;
      path.half_edges.push_back(cur);
      cur = g.at(cur).next;
    } while (cur != start.id);
    path.signed_area_m2 = signed_area(walk_ring(path, g));
    path.orientation = path.signed_area_m2 < -1e-9 ? FaceOrientation::Interior : FaceOrientation::Outer;
    faces.push_back(std::move(path));
  }
  return faces;
}

Polygon walk_ring(const ClosedPath& path, const DirectedStreetGraph& g) {
  Polygon ring;
  for (HalfEdgeId h : path.half_edges) {
    const Polyline& geom = g.at(h).geometry;
    for (std::size_t i = 0; i + 1 < geom.size(); ++i) {
      if (ring.empty() || ring.back() != geom[i]) ring.push_back(geom[i]);
    }
  }
  while (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  return ring;
}

double SidewalkLine::length() const {
  double len = 0.0;
  for (std::size_t i = 0; i < segment_count(); ++i) len += distance(segment_start(i), segment_end(i));
  return len;
}

namespace {

constexpr double kSamePoint = 1e-9;

struct RawSegment {
  Vec2 a;
  Vec2 b;
  double offset = 0.0;
  HalfEdgeId source = 0;

  Vec2 dir() const { return normalized(b - a); }
  Vec2 normal() const { return right_normal(b - a); }
  Vec2 start() const { return a + normal() * offset; }
  Vec2 end() const { return b + normal() * offset; }
};

struct Chain {
  Polyline points;
  std::vector<HalfEdgeId> sources;

  void emit(Vec2 p, HalfEdgeId src) {
    if (!points.empty() && distance(points.back(), p) < kSamePoint) {
      sources.back() = src;
      return;
    }
    points.push_back(p);
    sources.push_back(src);
  }
};

void round_join(Chain& out, Vec2 vertex, const RawSegment& s1, const RawSegment& s2,
                const OffsetOptions& opt) {
  const Vec2 n1 = s1.normal();
  const Vec2 n2 = s2.normal();
  const double a1 = std::atan2(n1.y, n1.x);
  double sweep = std::atan2(n2.y, n2.x) - a1;
  while (sweep <= 0.0) sweep += 2.0 * std::numbers::pi;
  while (sweep > 2.0 * std::numbers::pi) sweep -= 2.0 * std::numbers::pi;
  const double step = opt.round_step_deg * std::numbers::pi / 180.0;
  const int k = std::max(1, static_cast<int>(std::ceil(sweep / step - 1e-9)));
  out.emit(s1.end(), kJoinSegment);
  for (int j = 1; j < k; ++j) {
    const double f = static_cast<double>(j) / k;
    const double ang = a1 + sweep * f;
    const double r = s1.offset + (s2.offset - s1.offset) * f;
    out.emit(vertex + Vec2{std::cos(ang), std::sin(ang)} * r, kJoinSegment);
  }
  out.emit(s2.start(), s2.source);
}

// Emits the join between two consecutive segments; the last emitted point
// starts s2's offset segment.
void join(Chain& out, const RawSegment& s1, const RawSegment& s2, const OffsetOptions& opt) {
  const Vec2 vertex = s1.b;
  const Vec2 d1 = s1.dir();
  const Vec2 d2 = s2.dir();
  const double turn = cross(d1, d2);
  if (std::abs(turn) < 1e-9) {
    if (dot(d1, d2) > 0.0) {
      if (s1.offset != s2.offset) out.emit(s1.end(), kJoinSegment);
      out.emit(s2.start(), s2.source);
    } else {
      round_join(out, vertex, s1, s2, opt);  // dead end: cap around the vertex
    }
    return;
  }
  const auto corner = intersect_lines(s1.start(), s1.end(), s2.start(), s2.end());
  if (turn < 0.0) {
    // Right turn: the offset side is inside the corner; trimming removes
    // any overshoot on short segments.
    if (corner) {
      out.emit(*corner, s2.source);
    } else {
      out.emit(s1.end(), kJoinSegment);
      out.emit(s2.start(), s2.source);
    }
    return;
  }
  const double limit = opt.miter_limit * std::max(s1.offset, s2.offset);
  if (corner && distance(*corner, vertex) <= limit) {
    out.emit(*corner, s2.source);
  } else {
    round_join(out, vertex, s1, s2, opt);
  }
}

void dedupe_closed(Chain& c) {
  while (c.points.size() > 1 && distance(c.points.front(), c.points.back()) < kSamePoint) {
    c.points.pop_back();
    c.sources.pop_back();
  }
}

struct Crossing {
  std::size_t i = 0;
  std::size_t j = 0;
  Vec2 point;
};

std::optional<Crossing> first_self_intersection(const Polyline& pts, bool closed) {
  const std::size_t n = pts.size();
  const std::size_t segs = closed ? n : n - 1;
  for (std::size_t i = 0; i < segs; ++i) {
    const Vec2 a = pts[i];
    const Vec2 b = pts[(i + 1) % n];
    const Box bi = bounding_box(std::vector<Vec2>{a, b});
    for (std::size_t j = i + 2; j < segs; ++j) {
      if (closed && i == 0 && j == n - 1) continue;  // adjacent through the wrap
      const Vec2 c = pts[j];
      const Vec2 d = pts[(j + 1) % n];
      if (std::max(c.x, d.x) < bi.min.x || std::min(c.x, d.x) > bi.max.x ||
          std::max(c.y, d.y) < bi.min.y || std::min(c.y, d.y) > bi.max.y) {
        continue;
      }
      if (auto hit = intersect_segments(a, b, c, d)) return Crossing{i, j, hit->point};
    }
  }
  return std::nullopt;
}

bool orientation_ok(const Polyline& ring, int desired_sign) {
  const double area = signed_area(ring);
  return std::abs(area) > 1e-6 && (area > 0.0) == (desired_sign > 0);
}

std::vector<Chain> trim_closed(Chain ring, int desired_sign) {
  std::vector<Chain> out;
  std::vector<Chain> stack{std::move(ring)};
  while (!stack.empty()) {
    Chain cur = std::move(stack.back());
    stack.pop_back();
    dedupe_closed(cur);
    if (cur.points.size() < 3) continue;
    const auto hit = first_self_intersection(cur.points, true);
    if (!hit) {
      if (orientation_ok(cur.points, desired_sign)) out.push_back(std::move(cur));
      continue;
    }
    const std::size_t n = cur.points.size();
    Chain loop;
    loop.emit(hit->point, cur.sources[hit->i]);
    for (std::size_t k = hit->i + 1; k <= hit->j; ++k) loop.emit(cur.points[k], cur.sources[k]);
    Chain rest;
    for (std::size_t k = hit->j + 1; k < n; ++k) rest.emit(cur.points[k], cur.sources[k]);
    for (std::size_t k = 0; k <= hit->i; ++k) rest.emit(cur.points[k], cur.sources[k]);
    rest.emit(hit->point, cur.sources[hit->j]);
    dedupe_closed(loop);
    dedupe_closed(rest);
    const bool loop_ok = loop.points.size() >= 3 && orientation_ok(loop.points, desired_sign);
    const bool rest_ok = rest.points.size() >= 3 && orientation_ok(rest.points, desired_sign);
    if (!loop_ok && !rest_ok) {
      // Both halves inverted: the curve has collapsed.
      continue;
    }
    if (loop_ok) stack.push_back(std::move(loop));
    if (rest_ok) stack.push_back(std::move(rest));
  }
  return out;
}

Chain trim_open(Chain line) {
  while (line.points.size() >= 4) {
    const auto hit = first_self_intersection(line.points, false);
    if (!hit) break;
    Chain next;
    for (std::size_t k = 0; k <= hit->i; ++k) next.emit(line.points[k], line.sources[k]);
    next.emit(hit->point, line.sources[hit->j]);
    for (std::size_t k = hit->j + 1; k < line.points.size(); ++k) {
      next.emit(line.points[k], line.sources[k]);
    }
    line = std::move(next);
  }
  return line;
}

// A valid offset curve keeps its distance from the walk; vertices that come
// closer belong to a collapsed (inverted) part of the face.
bool clear_of_walk(const Chain& c, const std::vector<RawSegment>& segs, double min_offset) {
  const double limit = min_offset * (1.0 - 1e-6) - 1e-9;
  for (Vec2 p : c.points) {
    for (const RawSegment& s : segs) {
      if (point_segment_distance(p, s.a, s.b) < limit) return false;
    }
  }
  return true;
}

std::vector<RawSegment> walk_segments(const ClosedPath& path, const DirectedStreetGraph& g,
                                      std::span<const double> offsets) {
  std::vector<RawSegment> segs;
  for (HalfEdgeId h : path.half_edges) {
    const Polyline& geom = g.at(h).geometry;
    const double off = offsets[static_cast<std::size_t>(h)];
    for (std::size_t i = 1; i < geom.size(); ++i) {
      if (distance(geom[i - 1], geom[i]) <= 0.0) continue;
      segs.push_back({geom[i - 1], geom[i], off, h});
    }
  }
  return segs;
}

}  // namespace

OffsetResult offset_walk(const ClosedPath& path, const DirectedStreetGraph& g,
                         std::span<const double> offset_by_half_edge, const OffsetOptions& options) {
  if (offset_by_half_edge.size() != g.half_edges.size()) {
    throw Error(ErrorKind::Config, "offset table size does not match the half-edge count");
  }
  OffsetResult result;
  const std::vector<RawSegment> segs = walk_segments(path, g, offset_by_half_edge);
  const std::size_t n = segs.size();
  if (n == 0) return result;
  const int desired = path.orientation == FaceOrientation::Interior ? -1 : 1;

  auto enabled = [&](std::size_t i) { return segs[i % n].offset > 0.0; };
  const bool all_enabled = std::all_of(segs.begin(), segs.end(), [](const RawSegment& s) { return s.offset > 0.0; });

  std::vector<Chain> chains;
  if (all_enabled) {
    if (n < 2) {
      result.degenerate = true;
      return result;
    }
    Chain ring;
    join(ring, segs[n - 1], segs[0], options);
    for (std::size_t i = 0; i + 1 < n; ++i) join(ring, segs[i], segs[i + 1], options);
    std::vector<Chain> trimmed = trim_closed(std::move(ring), desired);
    double min_offset = segs.front().offset;
    for (const RawSegment& s : segs) min_offset = std::min(min_offset, s.offset);
    std::erase_if(trimmed, [&](const Chain& c) { return !clear_of_walk(c, segs, min_offset); });
    if (trimmed.empty()) result.degenerate = true;
    for (Chain& c : trimmed) {
      SidewalkLine line{std::move(c.points), std::move(c.sources), true, 0};
      if (line.length() >= options.min_length_m) result.lines.push_back(std::move(line));
    }
    return result;
  }

  // Open runs; start scanning right after a disabled segment.
  std::size_t first_disabled = 0;
  while (enabled(first_disabled)) ++first_disabled;
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t i = (first_disabled + k) % n;
    if (!enabled(i) || enabled(i + n - 1)) continue;
    Chain run;
    run.emit(segs[i].start(), segs[i].source);
    std::size_t cur = i;
    while (enabled(cur + 1) && (cur + 1) % n != i) {
      join(run, segs[cur], segs[(cur + 1) % n], options);
      cur = (cur + 1) % n;
    }
    run.emit(segs[cur].end(), kJoinSegment);
    chains.push_back(trim_open(std::move(run)));
  }
  for (Chain& c : chains) {
    SidewalkLine line{std::move(c.points), std::move(c.sources), false, 0};
    if (line.points.size() >= 2 && line.length() >= options.min_length_m) {
      result.lines.push_back(std::move(line));
    }
  }
  return result;
}

OffsetResult offset_sidewalk(const ClosedPath& path, const DirectedStreetGraph& g, double offset_m,
                             const OffsetOptions& options) {
  if (!(offset_m > 0.0)) throw Error(ErrorKind::Config, "offset must be positive");
  const std::vector<double> offsets(g.half_edges.size(), offset_m);
  return offset_walk(path, g, offsets, options);
}

void SidewalkLayer::reindex() {
  by_half_edge.clear();
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const SidewalkLine& line = lines[l];
    for (std::size_t s = 0; s < line.segment_count(); ++s) {
      if (line.sources[s] == kJoinSegment) continue;
      by_half_edge[line.sources[s]].push_back({l, s});
    }
  }
}

std::span<const SidewalkLayer::SegmentRef> SidewalkLayer::segments_of(HalfEdgeId h) const {
  auto it = by_half_edge.find(h);
  if (it == by_half_edge.end()) return {};
  return it->second;
}

SidewalkLayer build_sidewalks(const StreetNetwork& net, const DirectedStreetGraph& g,
                              const PedestrianferConfig& cfg) {
  std::vector<double> offsets(g.half_edges.size(), 0.0);
  for (const HalfEdge& h : g.half_edges) {
    const SidewalkMeta& meta = net.edge(h.edge).sidewalk_meta;
    const double off = meta.offset_m.value_or(cfg.default_offset_m);
    if (cfg.regime == SidewalkRegime::Full) {
      offsets[static_cast<std::size_t>(h.id)] = off;
    } else {
      // Half-edge 2e runs along the street, so its right is the street's right.
      const bool forward = h.id % 2 == 0;
      const std::optional<bool> flag = forward ? meta.right : meta.left;
      offsets[static_cast<std::size_t>(h.id)] = flag.value_or(false) ? off : 0.0;
    }
  }
  SidewalkLayer layer;
  const std::vector<ClosedPath> faces = enumerate_rht_faces(g);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    OffsetResult r = offset_walk(faces[f], g, offsets, cfg.offset);
    if (r.degenerate) layer.degenerate_faces.push_back(f);
    for (SidewalkLine& line : r.lines) {
      line.face = f;
      layer.lines.push_back(std::move(line));
    }
  }
  layer.reindex();
  return layer;
}

}  // namespace pathweaver
