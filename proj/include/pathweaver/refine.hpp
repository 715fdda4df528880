#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathweaver/pedestrian_graph.hpp"
#include "pathweaver/raster.hpp"
#include "pathweaver/street_model.hpp"

namespace pathweaver {

/// X' = A X + t in pixel coordinates, A = [[a, b], [c, d]].
struct AffineParams {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;
  double t1 = 0.0, t2 = 0.0;

  double det() const { return a * d - b * c; }
  Vec2 apply(Vec2 p) const { return {a * p.x + b * p.y + t1, c * p.x + d * p.y + t2}; }
  bool is_identity() const { return a == 1.0 && b == 0.0 && c == 0.0 && d == 1.0 && t1 == 0.0 && t2 == 0.0; }
  bool operator==(const AffineParams&) const = default;
};

struct SpsaConfig {
  int iterations = 200;
  double a = 0.2;
  double c = 2.0;  // pixels
  double A_stability = 10.0;
  double alpha = 0.602;
  double gamma = 0.101;
  std::uint64_t seed = 42;
  // Determinant box for A. The summed objective grows with polygon area, so
  // a wide box lets every corner inflate to its upper bound.
  double det_min = 0.8;
  double det_max = 1.25;
};

struct RefineConfig {
  SpsaConfig spsa;
  double prune_threshold = 0.3;
  double confidence_buffer_m = 1.0;
  double skip_score = 0.0;        // corners scoring below this at identity are left untouched
  double group_radius_m = 30.0;
  std::size_t min_degree = 3;
  bool post_recheck = false;      // also drop kept corners whose optimized mu_p falls below the threshold
  Exec exec = Exec::Parallel;
};

struct CornerGroup {
  CornerTag tag;
  std::vector<NodeId> nodes;  // ring order
  Polygon ring;               // local meters, counterclockwise about the centroid

  bool optimizable() const { return nodes.size() >= 3; }
};

/// Partitions the sidewalk endpoints and curbs around an intersection into
/// corners by the angular sector they fall in.
std::vector<CornerGroup> group_corner_nodes(const PedestrianGraph& g, NodeId intersection,
                                            const StreetNetwork& net, double radius_m = 30.0);

struct PolygonScore {
  double g = 0.0;
  std::size_t m = 0;
};

/// Warps the corner ring (pixel coordinates) by theta, keeps the warped
/// points inside the raster and sums the corner_bulb plane under it.
PolygonScore polygon_score(const CornerGroup& cg, const AffineParams& theta, const ProbabilityRaster& r,
                           Exec exec = Exec::Serial);

/// g/m, or 0 when no pixel is covered.
double mean_polygon_probability(const CornerGroup& cg, const AffineParams& theta, const ProbabilityRaster& r);

/// Ring vertices after warping and clamping, in local meters.
std::vector<Vec2> warped_positions(const CornerGroup& cg, const AffineParams& theta, const ProbabilityRaster& r);

struct SpsaResult {
  AffineParams theta;              // best seen
  double best_score = 0.0;
  double initial_score = 0.0;
  int best_iteration = -1;         // -1: identity was never beaten
  std::vector<double> trace;       // g at each iterate
};

SpsaResult spsa_optimize(const CornerGroup& cg, const ProbabilityRaster& r, const SpsaConfig& cfg,
                         std::uint64_t stream = 0);

struct CornerDecision {
  CornerTag corner;
  bool keep = true;
  double mu_p = 0.0;
  std::map<NodeId, Vec2> moved;  // new local positions for kept corners
};

/// Drops the nodes of rejected corners with every crossing chain that
/// touches them, moves kept corner nodes, and reconnects edges. With a street
/// network, crossing midpoints are re-derived on the street centerline.
PedestrianGraph prune_and_rebuild(const PedestrianGraph& g, std::span<const CornerDecision> decisions,
                                  const StreetNetwork* net = nullptr);

struct EdgeConfidence {
  double confidence = 0.0;
  std::size_t pixels = 0;
};

/// Mean class probability in a flat-capped buffer around the edge.
EdgeConfidence edge_confidence(const PedEdge& e, const ProbabilityRaster& r, double buffer_m = 1.0);

struct CornerReport {
  CornerTag corner;
  std::size_t node_count = 0;
  double mu_initial = 0.0;
  double mu_final = 0.0;
  bool optimized = false;
  bool kept = true;
  bool skipped = false;  // fewer than three nodes
  SpsaResult spsa;
};

struct RefineResult {
  PedestrianGraph graph;
  std::vector<CornerReport> corners;
  std::vector<std::string> warnings;
};

RefineResult refine_graph_detailed(const PedestrianGraph& hypo, const ProbabilityRaster& r,
                                   const StreetNetwork& net, const RefineConfig& cfg = {});
PedestrianGraph refine_graph(const PedestrianGraph& hypo, const ProbabilityRaster& r, const StreetNetwork& net,
                             const RefineConfig& cfg = {});

/// Stable per-corner stream id mixed into the SPSA seed.
std::uint64_t corner_stream(const CornerTag& tag);

}  // namespace pathweaver
