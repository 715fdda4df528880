#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathweaver/geometry.hpp"
#include "pathweaver/pedestrian_graph.hpp"
#include "pathweaver/street_model.hpp"

namespace pathweaver {

enum class FaceOrientation { Interior, Outer };

/// Closed right-hand-turn walk through the half-edge structure. Interior
/// walks run clockwise around a block (negative signed area).
struct ClosedPath {
  std::vector<HalfEdgeId> half_edges;
  FaceOrientation orientation = FaceOrientation::Outer;
  double signed_area_m2 = 0.0;
};

/// Partitions all half-edges into face walks, ordered by smallest half-edge id.
std::vector<ClosedPath> enumerate_rht_faces(const DirectedStreetGraph& g);

/// Walk geometry as a closed ring (consecutive duplicate vertices removed).
Polygon walk_ring(const ClosedPath& path, const DirectedStreetGraph& g);

struct OffsetOptions {
  double miter_limit = 2.0;      // multiple of the offset
  double round_step_deg = 15.0;  // maximum angular step of round joins
  double min_length_m = 0.5;
};

constexpr HalfEdgeId kJoinSegment = -1;

/// Offset sidewalk line. `sources[i]` names the half-edge that produced the
/// segment starting at points[i] (kJoinSegment for join/cap pieces); closed
/// lines include the segment from the last point back to the first.
struct SidewalkLine {
  Polyline points;
  std::vector<HalfEdgeId> sources;
  bool closed = false;
  std::size_t face = 0;

  std::size_t segment_count() const { return closed ? points.size() : points.size() - 1; }
  Vec2 segment_start(std::size_t i) const { return points[i]; }
  Vec2 segment_end(std::size_t i) const { return points[(i + 1) % points.size()]; }
  double length() const;
};

struct OffsetResult {
  std::vector<SidewalkLine> lines;
  bool degenerate = false;  // offset curve collapsed for this face
};

/// Offsets every segment of the walk to its right by `offset_m`, joins
/// consecutive segments (miter up to the limit, round beyond it) and trims
/// loops created by self-intersection.
OffsetResult offset_sidewalk(const ClosedPath& path, const DirectedStreetGraph& g, double offset_m,
                             const OffsetOptions& options = {});

/// Per-half-edge variant; a non-positive offset disables that half-edge, and
/// runs of enabled half-edges become open lines.
OffsetResult offset_walk(const ClosedPath& path, const DirectedStreetGraph& g,
                         std::span<const double> offset_by_half_edge,
                         const OffsetOptions& options = {});

/// All offset sidewalk lines of a network with a lookup from half-edge to the
/// line segments it produced.
struct SidewalkLayer {
  std::vector<SidewalkLine> lines;
  std::vector<std::size_t> degenerate_faces;

  struct SegmentRef {
    std::size_t line = 0;
    std::size_t segment = 0;
  };
  std::map<HalfEdgeId, std::vector<SegmentRef>> by_half_edge;

  /// Rebuilds `by_half_edge` from the line sources.
  void reindex();
  std::span<const SegmentRef> segments_of(HalfEdgeId h) const;
};

struct CrossingWeights {
  double distance = 1.0;  // per meter
  double length = 1.0;    // per meter
  double angle = 0.5;     // per degree
};

struct Attachment {
  Vec2 point;
  std::size_t line = 0;
  std::size_t segment = 0;
  double t = 0.0;
};

struct CrossingCandidate {
  EdgeId street = 0;
  HalfEdgeId half_edge = 0;  // leaves the intersection along the street
  NodeId intersection = 0;
  Vec2 sample_point;
  Attachment left;
  Attachment right;
  double dist_to_intersection = 0.0;
  double length = 0.0;
  double angle_dev = 0.0;
  double cost = 0.0;
  std::size_t index = 0;
  bool marked = false;
};

double crossing_cost(const CrossingCandidate& c, const CrossingWeights& w);

enum class SidewalkRegime { Full, Metadata };

struct PedestrianferConfig {
  SidewalkRegime regime = SidewalkRegime::Full;
  double default_offset_m = 4.0;
  CrossingWeights weights;
  double sample_start_m = 2.0;
  double sample_step_m = 2.0;
  double sample_max_m = 25.0;
  double search_radius_m = 40.0;
  double curb_setback_m = 1.5;
  std::size_t min_degree = 3;
  OffsetOptions offset;
};

/// Offsets every face of the network according to the sidewalk regime.
SidewalkLayer build_sidewalks(const StreetNetwork& net, const DirectedStreetGraph& g,
                              const PedestrianferConfig& cfg);

std::vector<CrossingCandidate> generate_crossing_candidates(NodeId intersection,
                                                            const StreetNetwork& net,
                                                            const DirectedStreetGraph& g,
                                                            const SidewalkLayer& sidewalks,
                                                            const PedestrianferConfig& cfg);

/// Argmin of the weighted cost; ties go to the smaller distance, then index.
std::optional<CrossingCandidate> select_crossing(std::span<const CrossingCandidate> candidates,
                                                 const CrossingWeights& weights);

struct CrossingPieces {
  std::vector<PedNode> nodes;  // left curb, midpoint, right curb
  std::vector<PedEdge> edges;  // link, crossing, crossing, link
  bool unsplit = false;        // too short to split: one crossing edge
};

/// Splits a crossing line into sidewalk-surface links and street-surface
/// crossings around a midpoint on the street centerline.
CrossingPieces split_crossing(const CrossingCandidate& c, const Polyline& street,
                              double curb_setback_m, NodeId left_endpoint, NodeId right_endpoint,
                              NodeId first_node_id, EdgeId first_edge_id);

struct Hypothesis {
  PedestrianGraph graph;
  std::vector<std::size_t> degenerate_faces;
  std::size_t unsplit_crossings = 0;
  std::vector<std::string> warnings;
};

Hypothesis hypothesize_detailed(const StreetNetwork& net, const PedestrianferConfig& cfg = {});
PedestrianGraph hypothesize(const StreetNetwork& net, const PedestrianferConfig& cfg = {});

}  // namespace pathweaver
