#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace pathweaver {

/// Planar point/vector in region-local meters (or pixels, where noted).
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(b - a); }
inline Vec2 normalized(Vec2 a) {
  const double n = norm(a);
  return n > 0.0 ? a / n : Vec2{};
}
/// Unit normal pointing to the right of direction `d`.
inline Vec2 right_normal(Vec2 d) { return normalized(Vec2{d.y, -d.x}); }

using Polyline = std::vector<Vec2>;
/// Ring without a repeated closing vertex.
using Polygon = std::vector<Vec2>;

struct Segment {
  Vec2 a;
  Vec2 b;
};

struct Box {
  Vec2 min{};
  Vec2 max{};

  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  bool contains(Vec2 p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
  }
};

Box bounding_box(std::span<const Vec2> pts);

/// Shoelace signed area; positive for counterclockwise rings.
double signed_area(std::span<const Vec2> ring);
double polyline_length(std::span<const Vec2> line);
Vec2 centroid_of_points(std::span<const Vec2> pts);
/// Area centroid of a simple ring; falls back to the vertex mean when degenerate.
Vec2 polygon_centroid(std::span<const Vec2> ring);

/// Bearing in degrees clockwise from north (+y) in [0, 360).
double bearing_deg(Vec2 from, Vec2 to);

struct ClosestPoint {
  Vec2 point;
  double distance = 0.0;
  double t = 0.0;  // parameter along the segment in [0, 1]
};

ClosestPoint closest_on_segment(Vec2 p, Vec2 a, Vec2 b);
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

/// Point at arc length `s` along a polyline (clamped to its ends).
Vec2 point_at_length(std::span<const Vec2> line, double s);
/// Unit tangent direction at arc length `s`.
Vec2 direction_at_length(std::span<const Vec2> line, double s);

struct SegmentHit {
  Vec2 point;
  double t = 0.0;  // along the first segment
  double u = 0.0;  // along the second segment
};

/// Proper or touching intersection of closed segments; collinear overlaps
/// report the first overlapping endpoint.
std::optional<SegmentHit> intersect_segments(Vec2 a, Vec2 b, Vec2 c, Vec2 d);

/// Intersection of the infinite lines through (a,b) and (c,d).
std::optional<Vec2> intersect_lines(Vec2 a, Vec2 b, Vec2 c, Vec2 d);

bool on_segment(Vec2 p, Vec2 a, Vec2 b, double tol = 0.0);

/// Strict interior test: points on the boundary are outside.
bool point_strictly_inside(Vec2 p, std::span<const Vec2> ring);

/// True when no two non-adjacent edges of the ring touch.
bool is_simple_polygon(std::span<const Vec2> ring);

bool polylines_intersect(std::span<const Vec2> a, std::span<const Vec2> b);

/// Andrew monotone chain; counterclockwise, no repeated vertices.
Polygon convex_hull(std::vector<Vec2> pts);

/// Keeps the part of a convex or concave ring on the left of the directed line a->b.
Polygon clip_half_plane(const Polygon& ring, Vec2 a, Vec2 b);

/// Intersection of a polygon with a convex counterclockwise clip ring.
Polygon clip_convex(const Polygon& subject, const Polygon& convex_clip);

/// Parameter interval [t0, t1] of segment a->b inside a convex CCW ring.
std::optional<std::pair<double, double>> clip_segment_convex(
    Vec2 a, Vec2 b, std::span<const Vec2> convex_ccw);

/// Rectangle polygon around a segment, `half_width` each side, flat caps.
Polygon segment_buffer(Vec2 a, Vec2 b, double half_width);

/// Regular polygon approximating a circle, counterclockwise.
Polygon circle_polygon(Vec2 center, double radius, int segments);

}  // namespace pathweaver
