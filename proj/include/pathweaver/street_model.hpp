#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pathweaver/geometry.hpp"

namespace pathweaver {

/// WGS84 position in degrees.
struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
  bool operator==(const LonLat&) const = default;
};

/// Equirectangular projection about a fixed anchor. Accurate to well under a
/// centimeter over the extent of a single intersection-scale region.
class LocalFrame {
 public:
  static constexpr double kEarthRadiusM = 6371008.8;

  LocalFrame() = default;
  explicit LocalFrame(LonLat anchor);

  LonLat anchor() const { return anchor_; }
  Vec2 project(LonLat p) const;
  LonLat unproject(Vec2 xy) const;

  /// Anchors equal within `tol_deg`.
  bool same_as(const LocalFrame& other, double tol_deg = 1e-9) const;

 private:
  LonLat anchor_{};
  double cos_lat0_ = 1.0;
};

using NodeId = std::int64_t;
using EdgeId = std::int64_t;

struct StreetNode {
  NodeId id = 0;
  LonLat position;
  Vec2 local_xy;
};

struct SidewalkMeta {
  std::optional<bool> left;
  std::optional<bool> right;
  std::optional<double> offset_m;

  bool has_any() const { return left || right || offset_m; }
};

struct StreetEdge {
  EdgeId id = 0;
  NodeId from = 0;
  NodeId to = 0;
  std::vector<LonLat> geometry;
  Polyline local_geometry;
  SidewalkMeta sidewalk_meta;
  std::vector<LonLat> marked_crossings;
  std::size_t source_feature = 0;
};

struct StreetNetwork {
  std::vector<StreetNode> nodes;  // nodes[i].id == i
  std::vector<StreetEdge> edges;  // edges[i].id == i
  LocalFrame frame;
  Box bbox;

  const StreetNode& node(NodeId id) const { return nodes.at(static_cast<std::size_t>(id)); }
  const StreetEdge& edge(EdgeId id) const { return edges.at(static_cast<std::size_t>(id)); }

  std::size_t degree(NodeId id) const;
  std::vector<EdgeId> incident_edges(NodeId id) const;
  bool empty() const { return edges.empty(); }
};

struct LoadOptions {
  /// Endpoints closer than this (degrees) become the same node.
  double merge_tolerance_deg = 1e-7;
  /// Projection origin; the vertex centroid when unset.
  std::optional<LonLat> anchor;
};

/// Parses a GeoJSON FeatureCollection of LineStrings. Vertices shared between
/// features (or repeated within one) become nodes, so edges run node to node.
StreetNetwork load_street_network(std::string_view geojson, const LoadOptions& options = {});
StreetNetwork load_street_network_file(const std::filesystem::path& path,
                                       const LoadOptions& options = {});

/// Inverse of the loader: one LineString per edge, properties preserved.
std::string write_street_network(const StreetNetwork& net);

/// Nodes with undirected degree >= min_degree, sorted by id.
std::vector<NodeId> find_intersections(const StreetNetwork& net, std::size_t min_degree = 3);

using HalfEdgeId = std::int64_t;

struct HalfEdge {
  HalfEdgeId id = 0;
  EdgeId edge = 0;
  NodeId origin = 0;
  NodeId target = 0;
  double bearing_deg = 0.0;  // at origin, clockwise from north
  HalfEdgeId twin = 0;
  HalfEdgeId next = 0;       // next half-edge along the right-hand face walk
  Polyline geometry;         // local meters, oriented origin -> target
};

/// Half-edge structure of a street network. Half-edge 2e runs along edge e's
/// stored direction, 2e+1 against it.
struct DirectedStreetGraph {
  std::vector<HalfEdge> half_edges;
  /// Outgoing half-edges per node, sorted by bearing (ties by edge id).
  std::vector<std::vector<HalfEdgeId>> outgoing;

  const HalfEdge& at(HalfEdgeId h) const { return half_edges.at(static_cast<std::size_t>(h)); }
};

DirectedStreetGraph build_directed(const StreetNetwork& net);

/// Initial bearings of the streets leaving `node`, ascending.
std::vector<double> street_bearings_at(const StreetNetwork& net, NodeId node);

/// Index k of the angular sector [bearings[k], bearings[k+1]) containing
/// `bearing`, wrapping past 360 degrees. Requires a nonempty bearing list.
int sector_of(std::span<const double> sorted_bearings, double bearing);

}  // namespace pathweaver
