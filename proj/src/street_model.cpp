#include "pathweaver/street_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "pathweaver/error.hpp"

namespace pathweaver {

using nlohmann::json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

LonLat parse_position(const json& coord, std::size_t feature) {
  if (!coord.is_array() || coord.size() < 2 || !coord[0].is_number() || !coord[1].is_number()) {
    throw SchemaError(feature, "coordinate must be [lon, lat]");
  }
  LonLat p{coord[0].get<double>(), coord[1].get<double>()};
  if (!std::isfinite(p.lon) || !std::isfinite(p.lat) || p.lon < -180.0 || p.lon > 180.0 ||
      p.lat < -90.0 || p.lat > 90.0) {
    throw SchemaError(feature, "coordinate out of WGS84 range");
  }
  return p;
}

std::optional<bool> optional_bool(const json& props, const char* key, std::size_t feature) {
  if (!props.contains(key) || props[key].is_null()) return std::nullopt;
  if (!props[key].is_boolean()) throw SchemaError(feature, std::string(key) + " must be boolean");
  return props[key].get<bool>();
}

// Buckets vertices on a tolerance-sized grid so merging is a 3x3 lookup.
class VertexMerger {
 public:
  explicit VertexMerger(double tol) : tol_(tol) {}

  std::size_t insert(LonLat p) {
    const auto cx = static_cast<std::int64_t>(std::floor(p.lon / tol_));
    const auto cy = static_cast<std::int64_t>(std::floor(p.lat / tol_));
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (std::size_t idx : it->second) {
          const LonLat q = positions_[idx];
          if (std::abs(q.lon - p.lon) <= tol_ && std::abs(q.lat - p.lat) <= tol_) return idx;
        }
      }
    }
    const std::size_t idx = positions_.size();
    positions_.push_back(p);
    cells_[key(cx, cy)].push_back(idx);
    return idx;
  }

  LonLat position(std::size_t idx) const { return positions_[idx]; }
  std::size_t size() const { return positions_.size(); }

 private:
  static std::uint64_t key(std::int64_t x, std::int64_t y) {
    return (static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ULL) ^ static_cast<std::uint64_t>(y);
  }

  double tol_;
  std::vector<LonLat> positions_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

struct RawFeature {
  std::vector<std::size_t> clusters;
  SidewalkMeta meta;
  std::vector<LonLat> marked;
};

}  // namespace

LocalFrame::LocalFrame(LonLat anchor)
    : anchor_(anchor), cos_lat0_(std::cos(anchor.lat * kDegToRad)) {}

Vec2 LocalFrame::project(LonLat p) const {
  return {kEarthRadiusM * (p.lon - anchor_.lon) * kDegToRad * cos_lat0_,
          kEarthRadiusM * (p.lat - anchor_.lat) * kDegToRad};
}

LonLat LocalFrame::unproject(Vec2 xy) const {
  return {anchor_.lon + xy.x / (kEarthRadiusM * cos_lat0_ * kDegToRad),
          anchor_.lat + xy.y / (kEarthRadiusM * kDegToRad)};
}

bool LocalFrame::same_as(const LocalFrame& other, double tol_deg) const {
  return std::abs(anchor_.lon - other.anchor_.lon) <= tol_deg &&
         std::abs(anchor_.lat - other.anchor_.lat) <= tol_deg;
}

std::size_t StreetNetwork::degree(NodeId id) const {
  std::size_t d = 0;
  for (const StreetEdge& e : edges) {
    if (e.from == id) ++d;
    if (e.to == id) ++d;
  }
  return d;
}

std::vector<EdgeId> StreetNetwork::incident_edges(NodeId id) const {
  std::vector<EdgeId> out;
  for (const StreetEdge& e : edges) {
    if (e.from == id || e.to == id) out.push_back(e.id);
  }
  return out;
}

StreetNetwork load_street_network(std::string_view geojson, const LoadOptions& options) {
  json doc;
  try {
    doc = json::parse(geojson);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, std::string("malformed street GeoJSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw Error(ErrorKind::Schema, "street input must be a GeoJSON FeatureCollection");
  }
  const json& features = doc["features"];
  if (features.empty()) throw Error(ErrorKind::EmptyInput, "street collection has no features");

  VertexMerger merger(options.merge_tolerance_deg);
  std::vector<RawFeature> raw;
  std::vector<std::size_t> occurrences;
  LonLat vertex_sum{};
  std::size_t vertex_count = 0;

  for (std::size_t fi = 0; fi < features.size(); ++fi) {
    const json& f = features[fi];
    if (!f.is_object() || !f.contains("geometry") || !f["geometry"].is_object()) {
      throw SchemaError(fi, "feature has no geometry");
    }
    const json& geom = f["geometry"];
    if (geom.value("type", "") != "LineString") {
      throw SchemaError(fi, "expected LineString geometry, got '" + geom.value("type", "") + "'");
    }
    if (!geom.contains("coordinates") || !geom["coordinates"].is_array() ||
        geom["coordinates"].size() < 2) {
      throw SchemaError(fi, "LineString needs at least two coordinates");
    }
    RawFeature rf;
    for (const json& c : geom["coordinates"]) {
      const LonLat p = parse_position(c, fi);
      vertex_sum.lon += p.lon;
      vertex_sum.lat += p.lat;
      ++vertex_count;
      const std::size_t cl = merger.insert(p);
      if (!rf.clusters.empty() && rf.clusters.back() == cl) continue;  // repeated vertex
      rf.clusters.push_back(cl);
    }
    if (rf.clusters.size() < 2) throw SchemaError(fi, "zero-length LineString");

    const json props = f.contains("properties") && f["properties"].is_object() ? f["properties"]
                                                                               : json::object();
    rf.meta.left = optional_bool(props, "sidewalk_left", fi);
    rf.meta.right = optional_bool(props, "sidewalk_right", fi);
    if (props.contains("sidewalk_offset_m") && !props["sidewalk_offset_m"].is_null()) {
      if (!props["sidewalk_offset_m"].is_number()) {
        throw SchemaError(fi, "sidewalk_offset_m must be a number");
      }
      const double off = props["sidewalk_offset_m"].get<double>();
      if (!(off > 0.0) || !std::isfinite(off)) throw SchemaError(fi, "sidewalk_offset_m must be > 0");
      rf.meta.offset_m = off;
    }
    if (props.contains("marked_crossings") && !props["marked_crossings"].is_null()) {
      if (!props["marked_crossings"].is_array()) {
        throw SchemaError(fi, "marked_crossings must be an array of [lon, lat]");
      }
      for (const json& c : props["marked_crossings"]) rf.marked.push_back(parse_position(c, fi));
    }
    raw.push_back(std::move(rf));
  }

  occurrences.assign(merger.size(), 0);
  for (const RawFeature& rf : raw) {
    for (std::size_t cl : rf.clusters) ++occurrences[cl];
  }

  StreetNetwork net;
  net.frame = LocalFrame(options.anchor.value_or(
      LonLat{vertex_sum.lon / static_cast<double>(vertex_count),
             vertex_sum.lat / static_cast<double>(vertex_count)}));

  std::map<std::size_t, NodeId> node_of_cluster;
  auto node_for = [&](std::size_t cl) {
    auto it = node_of_cluster.find(cl);
    if (it != node_of_cluster.end()) return it->second;
    const NodeId id = static_cast<NodeId>(net.nodes.size());
    const LonLat p = merger.position(cl);
    net.nodes.push_back({id, p, net.frame.project(p)});
    node_of_cluster.emplace(cl, id);
    return id;
  };

  for (std::size_t fi = 0; fi < raw.size(); ++fi) {
    const RawFeature& rf = raw[fi];
    const std::size_t first_edge = net.edges.size();
    std::size_t start = 0;
    for (std::size_t i = 1; i < rf.clusters.size(); ++i) {
      const bool is_node = i + 1 == rf.clusters.size() || occurrences[rf.clusters[i]] >= 2;
      if (!is_node) continue;
      StreetEdge e;
      e.id = static_cast<EdgeId>(net.edges.size());
      e.from = node_for(rf.clusters[start]);
      e.to = node_for(rf.clusters[i]);
      for (std::size_t k = start; k <= i; ++k) {
        const LonLat p = merger.position(rf.clusters[k]);
        e.geometry.push_back(p);
        e.local_geometry.push_back(net.frame.project(p));
      }
      if (polyline_length(e.local_geometry) <= 0.0) {
        throw SchemaError(fi, "zero-length edge");
      }
      e.sidewalk_meta = rf.meta;
      e.source_feature = fi;
      net.edges.push_back(std::move(e));
      start = i;
    }
    // Marked crossings go to the split piece closest to them.
    for (const LonLat& m : rf.marked) {
      const Vec2 mp = net.frame.project(m);
      std::size_t best = first_edge;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = first_edge; k < net.edges.size(); ++k) {
        const Polyline& g = net.edges[k].local_geometry;
        for (std::size_t s = 1; s < g.size(); ++s) {
          const double d = point_segment_distance(mp, g[s - 1], g[s]);
          if (d < best_d) {
            best_d = d;
            best = k;
          }
        }
      }
      net.edges[best].marked_crossings.push_back(m);
    }
  }

  std::vector<Vec2> all;
  for (const StreetEdge& e : net.edges) {
    all.insert(all.end(), e.local_geometry.begin(), e.local_geometry.end());
  }
  net.bbox = bounding_box(all);
  return net;
}

StreetNetwork load_street_network_file(const std::filesystem::path& path,
                                       const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open street file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_street_network(buf.str(), options);
}

std::string write_street_network(const StreetNetwork& net) {
  json features = json::array();
  for (const StreetEdge& e : net.edges) {
    json coords = json::array();
    for (const LonLat& p : e.geometry) coords.push_back({p.lon, p.lat});
    json props = json::object();
    if (e.sidewalk_meta.left) props["sidewalk_left"] = *e.sidewalk_meta.left;
    if (e.sidewalk_meta.right) props["sidewalk_right"] = *e.sidewalk_meta.right;
    if (e.sidewalk_meta.offset_m) props["sidewalk_offset_m"] = *e.sidewalk_meta.offset_m;
    if (!e.marked_crossings.empty()) {
      json marks = json::array();
      for (const LonLat& m : e.marked_crossings) marks.push_back({m.lon, m.lat});
      props["marked_crossings"] = marks;
    }
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                        {"properties", props}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump();
}

std::vector<NodeId> find_intersections(const StreetNetwork& net, std::size_t min_degree) {
  if (min_degree < 3) throw Error(ErrorKind::Config, "min_degree must be >= 3");
  std::vector<std::size_t> deg(net.nodes.size(), 0);
  for (const StreetEdge& e : net.edges) {
    ++deg[static_cast<std::size_t>(e.from)];
    ++deg[static_cast<std::size_t>(e.to)];
  }
  std::vector<NodeId> out;
  for (const StreetNode& n : net.nodes) {
    if (deg[static_cast<std::size_t>(n.id)] >= min_degree) out.push_back(n.id);
  }
  return out;  // ids are assigned in ascending order
}

namespace {

double initial_bearing(const Polyline& g) {
  for (std::size_t i = 1; i < g.size(); ++i) {
    if (g[i] != g[0]) return bearing_deg(g[0], g[i]);
  }
  return 0.0;
}

bool same_geometry(const Polyline& a, const Polyline& b) {
  if (a.size() != b.size()) return false;
  const double tol = 1e-6;
  bool forward = true;
  bool backward = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    forward = forward && distance(a[i], b[i]) <= tol;
    backward = backward && distance(a[i], b[b.size() - 1 - i]) <= tol;
  }
  return forward || backward;
}

}  // namespace

DirectedStreetGraph build_directed(const StreetNetwork& net) {
  if (net.empty()) throw Error(ErrorKind::EmptyInput, "street network has no edges");

  std::map<std::pair<NodeId, NodeId>, std::vector<EdgeId>> by_pair;
  for (const StreetEdge& e : net.edges) {
    auto key = std::minmax(e.from, e.to);
    for (EdgeId other : by_pair[key]) {
      if (same_geometry(e.local_geometry, net.edge(other).local_geometry)) {
        throw Error(ErrorKind::Degenerate, "duplicate parallel edges " + std::to_string(other) +
                                               " and " + std::to_string(e.id));
      }
    }
    by_pair[key].push_back(e.id);
  }

  DirectedStreetGraph g;
  g.half_edges.resize(2 * net.edges.size());
  g.outgoing.assign(net.nodes.size(), {});
  for (const StreetEdge& e : net.edges) {
    const HalfEdgeId fwd = 2 * e.id;
    const HalfEdgeId rev = fwd + 1;
    HalfEdge& hf = g.half_edges[static_cast<std::size_t>(fwd)];
    HalfEdge& hr = g.half_edges[static_cast<std::size_t>(rev)];
    hf.id = fwd;
    hf.edge = e.id;
    hf.origin = e.from;
    hf.target = e.to;
    hf.twin = rev;
    hf.geometry = e.local_geometry;
    hf.bearing_deg = initial_bearing(hf.geometry);
    hr.id = rev;
    hr.edge = e.id;
    hr.origin = e.to;
    hr.target = e.from;
    hr.twin = fwd;
    hr.geometry.assign(e.local_geometry.rbegin(), e.local_geometry.rend());
    hr.bearing_deg = initial_bearing(hr.geometry);
    g.outgoing[static_cast<std::size_t>(e.from)].push_back(fwd);
    g.outgoing[static_cast<std::size_t>(e.to)].push_back(rev);
  }

  for (auto& out : g.outgoing) {
    std::sort(out.begin(), out.end(), [&](HalfEdgeId a, HalfEdgeId b) {
      const HalfEdge& ha = g.at(a);
      const HalfEdge& hb = g.at(b);
      if (ha.bearing_deg != hb.bearing_deg) return ha.bearing_deg < hb.bearing_deg;
      if (ha.edge != hb.edge) return ha.edge < hb.edge;
      return a < b;
    });
  }

  // Arriving along h at v, leave by the outgoing half-edge just counterclockwise
  // of twin(h) in bearing order: the sharpest right turn.
  for (HalfEdge& h : g.half_edges) {
    const auto& out = g.outgoing[static_cast<std::size_t>(h.target)];
    const auto pos = std::find(out.begin(), out.end(), h.twin);
    const std::size_t k = static_cast<std::size_t>(pos - out.begin());
    h.next = out[(k + out.size() - 1) % out.size()];
  }
  return g;
}

std::vector<double> street_bearings_at(const StreetNetwork& net, NodeId node) {
  std::vector<double> out;
  for (const StreetEdge& e : net.edges) {
    if (e.from == node) out.push_back(initial_bearing(e.local_geometry));
    if (e.to == node) {
      Polyline rev(e.local_geometry.rbegin(), e.local_geometry.rend());
      out.push_back(initial_bearing(rev));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int sector_of(std::span<const double> sorted_bearings, double bearing) {
  const int n = static_cast<int>(sorted_bearings.size());
  for (int k = 0; k + 1 < n; ++k) {
    if (bearing >= sorted_bearings[k] && bearing < sorted_bearings[k + 1]) return k;
  }
  return n - 1;  // wraps through north
}

}  // namespace pathweaver
