#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pathweaver/geometry.hpp"
#include "pathweaver/street_model.hpp"

namespace pathweaver {

enum class PedNodeKind { SidewalkEndpoint, Curb, CrossingMidpoint };
enum class PedEdgeKind { Sidewalk, Crossing, Link };
enum class CurbState { Raised, Lowered, Unknown };
enum class Provenance { Hypothesized, Optimized, HumanEdited };

const char* to_string(PedNodeKind k);
const char* to_string(PedEdgeKind k);
const char* to_string(CurbState s);
const char* to_string(Provenance p);
PedNodeKind parse_node_kind(std::string_view s);
PedEdgeKind parse_edge_kind(std::string_view s);
CurbState parse_curb_state(std::string_view s);
Provenance parse_provenance(std::string_view s);

/// Street corner a node was generated for: the angular sector `sector`
/// (counted clockwise from north) around intersection `intersection`.
struct CornerTag {
  NodeId intersection = 0;
  int sector = 0;
  auto operator<=>(const CornerTag&) const = default;
};

struct PedNode {
  NodeId id = 0;
  Vec2 local_xy;
  PedNodeKind kind = PedNodeKind::SidewalkEndpoint;
  std::optional<CurbState> curb_state;
  Provenance provenance = Provenance::Hypothesized;
  std::optional<CornerTag> corner;
  std::optional<EdgeId> street;  // street edge crossed (midpoints only)
};

struct PedEdge {
  EdgeId id = 0;
  NodeId u = 0;
  NodeId v = 0;
  PedEdgeKind kind = PedEdgeKind::Sidewalk;
  Polyline geometry;
  std::optional<double> confidence;
  Provenance provenance = Provenance::Hypothesized;
  std::optional<std::int64_t> crossing;  // shared by the pieces of one crossing line
  std::vector<std::string> flags;

  double length() const { return polyline_length(geometry); }
};

struct PedestrianGraph {
  LocalFrame frame;
  std::vector<PedNode> nodes;  // sorted by id
  std::vector<PedEdge> edges;  // sorted by id

  const PedNode* find_node(NodeId id) const;
  PedNode* find_node(NodeId id);
  std::map<NodeId, std::size_t> node_index() const;
  std::size_t degree(NodeId id) const;
  bool empty() const { return nodes.empty() && edges.empty(); }
  NodeId next_node_id() const { return nodes.empty() ? 0 : nodes.back().id + 1; }
  EdgeId next_edge_id() const { return edges.empty() ? 0 : edges.back().id + 1; }

  /// Throws Validation when an edge references a missing node or has zero length.
  void check_integrity() const;
};

/// Graph GeoJSON (OpenSidewalks-style tags). Coordinates are written in WGS84
/// through the graph's frame; the anchor is stored as a foreign member.
std::string write_graph_geojson(const PedestrianGraph& g);
PedestrianGraph read_graph_geojson(std::string_view text,
                                   std::optional<LocalFrame> default_frame = std::nullopt);

PedestrianGraph read_graph_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace pathweaver
