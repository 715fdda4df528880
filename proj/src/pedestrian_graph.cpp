#include "pathweaver/pedestrian_graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pathweaver/error.hpp"

namespace pathweaver {

using nlohmann::json;

const char* to_string(PedNodeKind k) {
  switch (k) {
    case PedNodeKind::SidewalkEndpoint: return "sidewalk_endpoint";
    case PedNodeKind::Curb: return "curb";
    case PedNodeKind::CrossingMidpoint: return "crossing_midpoint";
  }
  return "?";
}

const char* to_string(PedEdgeKind k) {
  switch (k) {
    case PedEdgeKind::Sidewalk: return "sidewalk";
    case PedEdgeKind::Crossing: return "crossing";
    case PedEdgeKind::Link: return "link";
  }
  return "?";
}

const char* to_string(CurbState s) {
  switch (s) {
    case CurbState::Raised: return "raised";
    case CurbState::Lowered: return "lowered";
    case CurbState::Unknown: return "unknown";
  }
  return "?";
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Hypothesized: return "hypothesized";
    case Provenance::Optimized: return "optimized";
    case Provenance::HumanEdited: return "human_edited";
  }
  return "?";
}

PedNodeKind parse_node_kind(std::string_view s) {
  if (s == "sidewalk_endpoint") return PedNodeKind::SidewalkEndpoint;
  if (s == "curb") return PedNodeKind::Curb;
  if (s == "crossing_midpoint") return PedNodeKind::CrossingMidpoint;
  throw Error(ErrorKind::Schema, "unknown node kind '" + std::string(s) + "'");
}

PedEdgeKind parse_edge_kind(std::string_view s) {
  if (s == "sidewalk") return PedEdgeKind::Sidewalk;
  if (s == "crossing") return PedEdgeKind::Crossing;
  if (s == "link") return PedEdgeKind::Link;
  throw Error(ErrorKind::Schema, "unknown footway '" + std::string(s) + "'");
}

CurbState parse_curb_state(std::string_view s) {
  if (s == "raised") return CurbState::Raised;
  if (s == "lowered") return CurbState::Lowered;
  if (s == "unknown") return CurbState::Unknown;
  throw Error(ErrorKind::Schema, "unknown kerb '" + std::string(s) + "'");
}

Provenance parse_provenance(std::string_view s) {
  if (s == "hypothesized") return Provenance::Hypothesized;
  if (s == "optimized") return Provenance::Optimized;
  if (s == "human_edited") return Provenance::HumanEdited;
  throw Error(ErrorKind::Schema, "unknown provenance '" + std::string(s) + "'");
}

const PedNode* PedestrianGraph::find_node(NodeId id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const PedNode& n, NodeId v) { return n.id < v; });
  return it != nodes.end() && it->id == id ? &*it : nullptr;
}

PedNode* PedestrianGraph::find_node(NodeId id) {
  return const_cast<PedNode*>(std::as_const(*this).find_node(id));
}

std::map<NodeId, std::size_t> PedestrianGraph::node_index() const {
  std::map<NodeId, std::size_t> idx;
  for (std::size_t i = 0; i < nodes.size(); ++i) idx.emplace(nodes[i].id, i);
  return idx;
}

std::size_t PedestrianGraph::degree(NodeId id) const {
  std::size_t d = 0;
  for (const PedEdge& e : edges) {
    if (e.u == id) ++d;
    if (e.v == id) ++d;
  }
  return d;
}

void PedestrianGraph::check_integrity() const {
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i - 1].id >= nodes[i].id) throw Error(ErrorKind::Validation, "node ids not sorted");
  }
  for (const PedEdge& e : edges) {
    if (!find_node(e.u) || !find_node(e.v)) {
      throw Error(ErrorKind::Validation, "edge " + std::to_string(e.id) + " has a dangling endpoint");
    }
    if (e.geometry.size() < 2 || e.length() <= 0.0) {
      throw Error(ErrorKind::Validation, "edge " + std::to_string(e.id) + " has zero length");
    }
  }
}

namespace {

json position(const LocalFrame& frame, Vec2 xy) {
  const LonLat p = frame.unproject(xy);
  return json::array({p.lon, p.lat});
}

Vec2 parse_xy(const LocalFrame& frame, const json& c) {
  if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
    throw Error(ErrorKind::Schema, "coordinate must be [lon, lat]");
  }
  return frame.project({c[0].get<double>(), c[1].get<double>()});
}

}  // namespace

std::string write_graph_geojson(const PedestrianGraph& g) {
  json features = json::array();
  for (const PedNode& n : g.nodes) {
    json props = {{"id", n.id}, {"kind", to_string(n.kind)}, {"provenance", to_string(n.provenance)}};
    if (n.curb_state) props["kerb"] = to_string(*n.curb_state);
    if (n.corner) props["corner"] = {n.corner->intersection, n.corner->sector};
    if (n.street) props["street"] = *n.street;
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", position(g.frame, n.local_xy)}}},
                        {"properties", props}});
  }
  for (const PedEdge& e : g.edges) {
    json coords = json::array();
    for (Vec2 p : e.geometry) coords.push_back(position(g.frame, p));
    json props = {{"id", e.id},
                  {"u", e.u},
                  {"v", e.v},
                  {"footway", to_string(e.kind)},
                  {"provenance", to_string(e.provenance)}};
    if (e.confidence) props["confidence"] = *e.confidence;
    if (e.crossing) props["crossing"] = *e.crossing;
    if (!e.flags.empty()) props["flags"] = e.flags;
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                        {"properties", props}});
  }
  const LonLat a = g.frame.anchor();
  json doc = {{"type", "FeatureCollection"}, {"anchor", {a.lon, a.lat}}, {"features", features}};
  return doc.dump() + "\n";
}

PedestrianGraph read_graph_geojson(std::string_view text, std::optional<LocalFrame> default_frame) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, std::string("malformed graph GeoJSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw Error(ErrorKind::Schema, "graph must be a GeoJSON FeatureCollection");
  }
  PedestrianGraph g;
  if (doc.contains("anchor")) {
    const json& a = doc["anchor"];
    if (!a.is_array() || a.size() != 2) throw Error(ErrorKind::Schema, "anchor must be [lon, lat]");
    g.frame = LocalFrame({a[0].get<double>(), a[1].get<double>()});
  } else if (default_frame) {
    g.frame = *default_frame;
  } else {
    // Foreign file: anchor at the mean coordinate.
    double lon = 0.0, lat = 0.0;
    std::size_t n = 0;
    for (const json& f : doc["features"]) {
      const json& c = f["geometry"]["coordinates"];
      if (f["geometry"].value("type", "") == "Point") {
        lon += c[0].get<double>();
        lat += c[1].get<double>();
        ++n;
      }
    }
    g.frame = LocalFrame(n ? LonLat{lon / n, lat / n} : LonLat{});
  }

  NodeId auto_node = 0;
  EdgeId auto_edge = 0;
  for (std::size_t fi = 0; fi < doc["features"].size(); ++fi) {
    const json& f = doc["features"][fi];
    if (!f.contains("geometry") || !f["geometry"].is_object()) {
      throw SchemaError(fi, "feature has no geometry");
    }
    const json& geom = f["geometry"];
    const json props = f.contains("properties") && f["properties"].is_object() ? f["properties"]
                                                                               : json::object();
    const std::string type = geom.value("type", "");
    try {
      if (type == "Point") {
        PedNode n;
        n.id = props.contains("id") ? props["id"].get<NodeId>() : auto_node;
        auto_node = std::max(auto_node, n.id + 1);
        n.local_xy = parse_xy(g.frame, geom["coordinates"]);
        n.kind = parse_node_kind(props.value("kind", "sidewalk_endpoint"));
        n.provenance = parse_provenance(props.value("provenance", "hypothesized"));
        if (props.contains("kerb")) n.curb_state = parse_curb_state(props["kerb"].get<std::string>());
        if (props.contains("corner")) {
          n.corner = CornerTag{props["corner"][0].get<NodeId>(), props["corner"][1].get<int>()};
        }
        if (props.contains("street")) n.street = props["street"].get<EdgeId>();
        g.nodes.push_back(n);
      } else if (type == "LineString") {
        PedEdge e;
        e.id = props.contains("id") ? props["id"].get<EdgeId>() : auto_edge;
        auto_edge = std::max(auto_edge, e.id + 1);
        if (!props.contains("u") || !props.contains("v")) {
          throw SchemaError(fi, "edge needs u and v node ids");
        }
        e.u = props["u"].get<NodeId>();
        e.v = props["v"].get<NodeId>();
        e.kind = parse_edge_kind(props.value("footway", "sidewalk"));
        e.provenance = parse_provenance(props.value("provenance", "hypothesized"));
        if (props.contains("confidence")) e.confidence = props["confidence"].get<double>();
        if (props.contains("crossing")) e.crossing = props["crossing"].get<std::int64_t>();
        if (props.contains("flags")) e.flags = props["flags"].get<std::vector<std::string>>();
        for (const json& c : geom["coordinates"]) e.geometry.push_back(parse_xy(g.frame, c));
        g.edges.push_back(std::move(e));
      } else {
        throw SchemaError(fi, "unsupported geometry type '" + type + "'");
      }
    } catch (const json::exception& ex) {
      throw SchemaError(fi, ex.what());
    }
  }
  std::sort(g.nodes.begin(), g.nodes.end(), [](const PedNode& a, const PedNode& b) { return a.id < b.id; });
  std::sort(g.edges.begin(), g.edges.end(), [](const PedEdge& a, const PedEdge& b) { return a.id < b.id; });
  g.check_integrity();
  return g;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

PedestrianGraph read_graph_file(const std::filesystem::path& path) {
  return read_graph_geojson(read_text_file(path));
}

}  // namespace pathweaver
