#pragma once

#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pathweaver/geometry.hpp"
#include "pathweaver/pedestrian_graph.hpp"
#include "pathweaver/raster.hpp"

namespace pathweaver {

struct VoronoiCell {
  std::size_t site = 0;
  Vec2 center;
  Polygon polygon;                // counterclockwise
  std::vector<int> boundary_ids;  // boundary_ids[i] names edge polygon[i] -> polygon[i+1]

  Vec2 boundary_start(std::size_t i) const { return polygon[i]; }
  Vec2 boundary_end(std::size_t i) const { return polygon[(i + 1) % polygon.size()]; }
};

struct VoronoiPartition {
  Box bbox;
  std::vector<Vec2> sites;  // after merging duplicates
  std::vector<VoronoiCell> cells;
  std::vector<std::string> warnings;
};

/// Bounded Voronoi cells by half-plane clipping of the bbox. Sites closer
/// than 1e-6 m to an earlier site are merged into it.
VoronoiPartition voronoi_partition(std::span<const Vec2> sites, const Box& bbox);

/// A graph clipped to one cell: graph nodes inside the cell plus cut points
/// where edges leave it, joined by the runs of edge geometry inside.
struct CellGraph {
  std::vector<Vec2> vertices;
  std::vector<std::set<int>> touches;  // boundary ids within 1e-6 m of each vertex
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  /// Component label per vertex, labels 0..k-1 in order of first vertex.
  std::vector<std::size_t> components(std::size_t* count = nullptr) const;
};

CellGraph clip_to_cell(const PedestrianGraph& g, const VoronoiCell& cell);

using BoundaryPair = std::pair<int, int>;  // first < second

struct TraversablePairSet {
  std::size_t cell = 0;
  std::set<BoundaryPair> pairs;
};

TraversablePairSet traversable_pairs(const PedestrianGraph& g, const VoronoiCell& cell, std::size_t cell_index = 0);

/// |a ∩ b| / |a ∪ b|, with two empty sets scoring 1.
double jaccard(const std::set<BoundaryPair>& a, const std::set<BoundaryPair>& b);

struct SimilarityResult {
  std::vector<double> per_cell;
  double mean = 0.0;
};

SimilarityResult traversability_similarity(const PedestrianGraph& pred, const PedestrianGraph& truth,
                                           const VoronoiPartition& part, Exec exec = Exec::Parallel);

/// Brandes betweenness on an unweighted graph, each node normalized by
/// (n-1)(n-2)/2 for its component size n (0 when n < 3).
std::vector<double> betweenness(std::size_t vertex_count, std::span<const std::pair<std::size_t, std::size_t>> edges);

struct LocalStats {
  std::vector<double> cc_per_cell;
  std::vector<double> bc_per_cell;
  double avg_cc = 0.0;
  double avg_bc = 0.0;
};

LocalStats local_cc_bc(const PedestrianGraph& g, const VoronoiPartition& part, Exec exec = Exec::Parallel);

struct RetrievalScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<std::string> flags;
};

/// Length-weighted buffered matching, sampled every 0.25 m.
RetrievalScore edge_retrieval_f1(const PedestrianGraph& pred, const PedestrianGraph& truth, double tol_m = 3.0);

struct GlobalStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double avg_degree = 0.0;  // 2|E| / |N|
};

GlobalStats global_stats(const PedestrianGraph& g);

struct EvalReport {
  GlobalStats pred;
  GlobalStats truth;
  LocalStats pred_local;
  LocalStats truth_local;
  SimilarityResult similarity;
  RetrievalScore retrieval;
  double tol_m = 3.0;
  std::size_t cell_count = 0;
  std::vector<std::string> warnings;
};

EvalReport evaluate(const PedestrianGraph& pred, const PedestrianGraph& truth, const VoronoiPartition& part,
                    double tol_m = 3.0, Exec exec = Exec::Parallel);

std::string eval_report_json(const EvalReport& r);

}  // namespace pathweaver
