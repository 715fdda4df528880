#include "pathweaver/geometry.hpp"

#include <algorithm>
#include <numbers>

namespace pathweaver {

Box bounding_box(std::span<const Vec2> pts) {
  Box box;
  if (pts.empty()) return box;
  box.min = box.max = pts.front();
  for (const Vec2& p : pts) {
    box.min.x = std::min(box.min.x, p.x);
    box.min.y = std::min(box.min.y, p.y);
    box.max.x = std::max(box.max.x, p.x);
    box.max.y = std::max(box.max.y, p.y);
  }
  return box;
}

double signed_area(std::span<const Vec2> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    twice += cross(ring[i], ring[(i + 1) % n]);
  }
  return 0.5 * twice;
}

double polyline_length(std::span<const Vec2> line) {
  double len = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) len += distance(line[i - 1], line[i]);
  return len;
}

Vec2 centroid_of_points(std::span<const Vec2> pts) {
  Vec2 sum;
  for (const Vec2& p : pts) sum += p;
  return pts.empty() ? sum : sum / static_cast<double>(pts.size());
}

Vec2 polygon_centroid(std::span<const Vec2> ring) {
  const double area = signed_area(ring);
  if (std::abs(area) < 1e-12) return centroid_of_points(ring);
  const std::size_t n = ring.size();
  // Shift to the first vertex to keep the products well conditioned.
  const Vec2 o = ring[0];
  Vec2 acc;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = ring[i] - o;
    const Vec2 q = ring[(i + 1) % n] - o;
    const double w = cross(p, q);
    acc += (p + q) * w;
  }
  return o + acc / (6.0 * area);
}

double bearing_deg(Vec2 from, Vec2 to) {
  const Vec2 d = to - from;
  double deg = std::atan2(d.x, d.y) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

ClosestPoint closest_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 q = a + ab * t;
  return {q, distance(p, q), t};
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  return closest_on_segment(p, a, b).distance;
}

Vec2 point_at_length(std::span<const Vec2> line, double s) {
  if (line.empty()) return {};
  if (s <= 0.0) return line.front();
  for (std::size_t i = 1; i < line.size(); ++i) {
    const double seg = distance(line[i - 1], line[i]);
    if (s <= seg && seg > 0.0) return line[i - 1] + (line[i] - line[i - 1]) * (s / seg);
    s -= seg;
  }
  return line.back();
}

Vec2 direction_at_length(std::span<const Vec2> line, double s) {
  if (line.size() < 2) return {};
  for (std::size_t i = 1; i < line.size(); ++i) {
    const double seg = distance(line[i - 1], line[i]);
    if ((s <= seg || i + 1 == line.size()) && seg > 0.0) {
      return normalized(line[i] - line[i - 1]);
    }
    s -= seg;
  }
  return normalized(line.back() - line[line.size() - 2]);
}

bool on_segment(Vec2 p, Vec2 a, Vec2 b, double tol) {
  if (tol <= 0.0) {
    if (cross(b - a, p - a) != 0.0) return false;
    return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
           p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y);
  }
  return point_segment_distance(p, a, b) <= tol;
}

std::optional<SegmentHit> intersect_segments(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const Vec2 r = b - a;
  const Vec2 s = d - c;
  const double denom = cross(r, s);
  const Vec2 ca = c - a;
  if (denom == 0.0) {
    if (cross(ca, r) != 0.0) return std::nullopt;  // parallel, disjoint
    // Collinear: look for any shared endpoint along r.
    const double rr = dot(r, r);
    if (rr == 0.0) {
      if (on_segment(a, c, d)) return SegmentHit{a, 0.0, 0.0};
      return std::nullopt;
    }
    const double t0 = dot(c - a, r) / rr;
    const double t1 = dot(d - a, r) / rr;
    const double lo = std::max(0.0, std::min(t0, t1));
    const double hi = std::min(1.0, std::max(t0, t1));
    if (lo > hi) return std::nullopt;
    const Vec2 p = a + r * lo;
    const double ss = dot(s, s);
    return SegmentHit{p, lo, ss > 0.0 ? dot(p - c, s) / ss : 0.0};
  }
  const double t = cross(ca, s) / denom;
  const double u = cross(ca, r) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return SegmentHit{a + r * t, t, u};
}

std::optional<Vec2> intersect_lines(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const Vec2 r = b - a;
  const Vec2 s = d - c;
  const double denom = cross(r, s);
  if (std::abs(denom) < 1e-12 * norm(r) * norm(s)) return std::nullopt;
  const double t = cross(c - a, s) / denom;
  return a + r * t;
}

bool point_strictly_inside(Vec2 p, std::span<const Vec2> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = ring[j];
    const Vec2 b = ring[i];
    if (on_segment(p, a, b)) return false;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

bool is_simple_polygon(std::span<const Vec2> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (ring[i] == ring[(i + 1) % n]) return false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      const Vec2 c = ring[j];
      const Vec2 d = ring[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges may only share their common vertex.
        if (n == 3) continue;
        const Vec2 shared = (j == i + 1) ? b : a;
        const Vec2 other_first = (j == i + 1) ? a : b;
        const Vec2 other_second = (j == i + 1) ? d : c;
        const Vec2 u = other_first - shared;
        const Vec2 v = other_second - shared;
        if (cross(u, v) == 0.0 && dot(u, v) > 0.0) return false;
        continue;
      }
      if (intersect_segments(a, b, c, d)) return false;
    }
  }
  return true;
}

bool polylines_intersect(std::span<const Vec2> a, std::span<const Vec2> b) {
  for (std::size_t i = 1; i < a.size(); ++i) {
    for (std::size_t j = 1; j < b.size(); ++j) {
      if (intersect_segments(a[i - 1], a[i], b[j - 1], b[j])) return true;
    }
  }
  return false;
}

Polygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 p, Vec2 q) {
    return p.x < q.x || (p.x == q.x && p.y < q.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    const Vec2 p = pts[i];
    while (k >= lower && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

Polygon clip_half_plane(const Polygon& ring, Vec2 a, Vec2 b) {
  Polygon out;
  const std::size_t n = ring.size();
  if (n == 0) return out;
  const Vec2 dir = b - a;
  auto side = [&](Vec2 p) { return cross(dir, p - a); };
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 cur = ring[i];
    const Vec2 nxt = ring[(i + 1) % n];
    const double sc = side(cur);
    const double sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc >= 0.0) != (sn >= 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back(cur + (nxt - cur) * t);
    }
  }
  // Drop consecutive duplicates produced by vertices exactly on the line.
  Polygon dedup;
  for (const Vec2& p : out) {
    if (dedup.empty() || distance(dedup.back(), p) > 1e-12) dedup.push_back(p);
  }
  while (dedup.size() > 1 && distance(dedup.front(), dedup.back()) <= 1e-12) dedup.pop_back();
  return dedup;
}

Polygon clip_convex(const Polygon& subject, const Polygon& convex_clip) {
  Polygon out = subject;
  const std::size_t n = convex_clip.size();
  for (std::size_t i = 0; i < n && !out.empty(); ++i) {
    out = clip_half_plane(out, convex_clip[i], convex_clip[(i + 1) % n]);
  }
  if (out.size() < 3) out.clear();
  return out;
}

std::optional<std::pair<double, double>> clip_segment_convex(
    Vec2 a, Vec2 b, std::span<const Vec2> convex_ccw) {
  // Cyrus-Beck against each inward half-plane.
  double t0 = 0.0;
  double t1 = 1.0;
  const Vec2 d = b - a;
  const std::size_t n = convex_ccw.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = convex_ccw[i];
    const Vec2 e = convex_ccw[(i + 1) % n] - p;
    const double num = cross(e, a - p);  // >= 0 inside
    const double den = cross(e, d);
    if (den == 0.0) {
      if (num < 0.0) return std::nullopt;
      continue;
    }
    const double t = -num / den;
    if (den > 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

Polygon segment_buffer(Vec2 a, Vec2 b, double half_width) {
  const Vec2 n = right_normal(b - a) * half_width;
  // Counterclockwise for a left-to-right segment.
  return {a + n, b + n, b - n, a - n};
}

Polygon circle_polygon(Vec2 center, double radius, int segments) {
  Polygon ring;
  ring.reserve(static_cast<std::size_t>(segments));
  for (int i = 0; i < segments; ++i) {
    const double ang = 2.0 * std::numbers::pi * i / segments;
    ring.push_back(center + Vec2{std::cos(ang), std::sin(ang)} * radius);
  }
  return ring;
}

}  // namespace pathweaver
