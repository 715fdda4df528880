// End-to-end runs: street network to refined pedestrian graph, and evaluation.
#include "pathweaver/pipeline.hpp"

#include <set>

#include "pathweaver/pedestrian_graph.hpp"

namespace pathweaver {

using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::Schema:
    case ErrorKind::Format:
    case ErrorKind::Config:
    case ErrorKind::Frame:
    case ErrorKind::Validation:
      return 2;
    default:
      return 3;
  }
}

namespace {

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j, PipelineConfig cfg) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
  try {
    if (j.contains("streets")) cfg.streets = j.at("streets").get<std::string>();
    if (j.contains("mask")) cfg.mask = j.at("mask").get<std::string>();
    if (j.contains("out")) cfg.out_graph = j.at("out").get<std::string>();
    if (j.contains("stats")) cfg.out_stats = j.at("stats").get<std::string>();
    if (j.contains("anchor")) cfg.anchor = LonLat{j.at("anchor").at(0).get<double>(), j.at("anchor").at(1).get<double>()};
    read_into(j, "area", cfg.area);
    read_into(j, "seed", cfg.seed);
    read_into(j, "tol_m", cfg.tol_m);

    if (j.contains("pedestrianfer")) {
      const json& p = j.at("pedestrianfer");
      PedestrianferConfig& c = cfg.pedestrianfer;
      if (p.contains("regime")) {
        const std::string r = p.at("regime").get<std::string>();
        if (r == "full") {
          c.regime = SidewalkRegime::Full;
        } else if (r == "metadata") {
          c.regime = SidewalkRegime::Metadata;
        } else {
          throw Error(ErrorKind::Config, "unknown sidewalk regime '" + r + "'");
        }
      }
      read_into(p, "default_offset_m", c.default_offset_m);
      read_into(p, "sample_start_m", c.sample_start_m);
      read_into(p, "sample_step_m", c.sample_step_m);
      read_into(p, "sample_max_m", c.sample_max_m);
      read_into(p, "search_radius_m", c.search_radius_m);
      read_into(p, "curb_setback_m", c.curb_setback_m);
      read_into(p, "min_degree", c.min_degree);
      read_into(p, "weight_distance", c.weights.distance);
      read_into(p, "weight_length", c.weights.length);
      read_into(p, "weight_angle", c.weights.angle);
      read_into(p, "miter_limit", c.offset.miter_limit);
    }
    if (j.contains("refine")) {
      const json& r = j.at("refine");
      RefineConfig& c = cfg.refine;
      read_into(r, "prune_threshold", c.prune_threshold);
      read_into(r, "confidence_buffer_m", c.confidence_buffer_m);
      read_into(r, "skip_score", c.skip_score);
      read_into(r, "group_radius_m", c.group_radius_m);
      read_into(r, "post_recheck", c.post_recheck);
      read_into(r, "iterations", c.spsa.iterations);
      read_into(r, "a", c.spsa.a);
      read_into(r, "c", c.spsa.c);
      read_into(r, "A", c.spsa.A_stability);
      read_into(r, "alpha", c.spsa.alpha);
      read_into(r, "gamma", c.spsa.gamma);
      read_into(r, "det_min", c.spsa.det_min);
      read_into(r, "det_max", c.spsa.det_max);
    }
    if (j.contains("synth")) {
      const json& s = j.at("synth");
      SynthOptions& c = cfg.synth;
      read_into(s, "resolution_m", c.resolution_m);
      read_into(s, "sidewalk_width_m", c.sidewalk_width_m);
      read_into(s, "crossing_width_m", c.crossing_width_m);
      read_into(s, "corner_dilation_m", c.corner_dilation_m);
      read_into(s, "blur_sigma_px", c.blur_sigma_px);
      read_into(s, "margin_m", c.margin_m);
      read_into(s, "noise_amplitude", c.noise_amplitude);
      read_into(s, "noise_seed", c.noise_seed);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("config: ") + e.what());
  }
  return cfg;
}

AreaStats area_stats(const PedestrianGraph& g, const StreetNetwork& net, std::string area, std::size_t min_degree) {
  AreaStats s;
  s.area = std::move(area);
  std::set<std::int64_t> crossing_lines;
  for (const PedEdge& e : g.edges) {
    if (e.kind == PedEdgeKind::Sidewalk) {
      ++s.sidewalk_count;
      s.sidewalk_length_m += e.length();
    } else if (e.kind == PedEdgeKind::Crossing) {
      s.crossing_length_m += e.length();
      if (e.crossing) {
        crossing_lines.insert(*e.crossing);
      } else {
        ++s.crossing_count;
      }
    }
  }
  s.crossing_count += crossing_lines.size();
  s.intersection_count = find_intersections(net, min_degree).size();
  return s;
}

ProphetResult run_prophet(const PipelineConfig& cfg) {
  ProphetResult out;
  std::optional<ProbabilityRaster> mask;
  if (cfg.mask) {
    try {
      mask = read_raster(*cfg.mask);
    } catch (const Error& e) {
      throw StageError("load", cfg.mask->string(), e);
    }
  }

  StreetNetwork net;
  try {
    LoadOptions lo;
    lo.anchor = cfg.anchor ? cfg.anchor : mask ? std::optional<LonLat>(mask->anchor) : std::nullopt;
    net = load_street_network_file(cfg.streets, lo);
  } catch (const Error& e) {
    throw StageError("load", cfg.streets.string(), e);
  }

  PedestrianGraph graph;
  try {
    Hypothesis h = hypothesize_detailed(net, cfg.pedestrianfer);
    graph = std::move(h.graph);
    out.warnings = std::move(h.warnings);
  } catch (const Error& e) {
    throw StageError("hypothesize", cfg.streets.string(), e);
  }

  if (mask) {
    try {
      RefineConfig rc = cfg.refine;
      rc.spsa.seed = cfg.seed;
      rc.min_degree = cfg.pedestrianfer.min_degree;
      RefineResult rr = refine_graph_detailed(graph, *mask, net, rc);
      graph = std::move(rr.graph);
      out.warnings.insert(out.warnings.end(), rr.warnings.begin(), rr.warnings.end());
    } catch (const Error& e) {
      throw StageError("refine", cfg.mask->string(), e);
    }
  }

  out.stats = area_stats(graph, net, cfg.area, cfg.pedestrianfer.min_degree);
  try {
    if (!cfg.out_graph.empty()) write_text_file(cfg.out_graph, write_graph_geojson(graph));
    if (cfg.out_stats) write_text_file(*cfg.out_stats, area_stats_json(out.stats));
  } catch (const Error& e) {
    throw StageError("write", cfg.out_graph.string(), e);
  }
  out.graph = std::move(graph);
  return out;
}

VoronoiPartition evaluation_partition(const StreetNetwork& net, const PedestrianGraph& pred,
                                      const PedestrianGraph& truth) {
  std::vector<Vec2> sites;
  for (NodeId id : find_intersections(net, 3)) sites.push_back(net.node(id).local_xy);
  if (sites.empty()) {
    for (const StreetNode& n : net.nodes) sites.push_back(n.local_xy);
  }
  std::vector<Vec2> pts = sites;
  for (const StreetNode& n : net.nodes) pts.push_back(n.local_xy);
  for (const PedestrianGraph* g : {&pred, &truth}) {
    for (const PedEdge& e : g->edges) pts.insert(pts.end(), e.geometry.begin(), e.geometry.end());
    for (const PedNode& n : g->nodes) pts.push_back(n.local_xy);
  }
  if (sites.empty()) throw Error(ErrorKind::EmptyInput, "no street nodes to partition around");
  Box box = bounding_box(pts);
  box.min = box.min - Vec2{1.0, 1.0};
  box.max = box.max + Vec2{1.0, 1.0};
  return voronoi_partition(sites, box);
}

EvalReport run_eval(const std::filesystem::path& pred_path, const std::filesystem::path& truth_path,
                    const std::filesystem::path& streets_path, const std::filesystem::path& report_path,
                    double tol_m, const std::string& area) {
  auto load_graph = [](const std::filesystem::path& p) {
    try {
      return read_graph_file(p);
    } catch (const Error& e) {
      throw StageError("load", p.string(), e);
    }
  };
  const PedestrianGraph pred = load_graph(pred_path);
  const PedestrianGraph truth = load_graph(truth_path);
  if (!pred.frame.same_as(truth.frame)) {
    throw StageError("eval", truth_path.string(),
                     Error(ErrorKind::Frame, "prediction and truth graphs use different anchors"));
  }
  StreetNetwork net;
  try {
    LoadOptions lo;
    lo.anchor = pred.frame.anchor();
    net = load_street_network_file(streets_path, lo);
  } catch (const Error& e) {
    throw StageError("load", streets_path.string(), e);
  }

  EvalReport rep;
  try {
    rep = evaluate(pred, truth, evaluation_partition(net, pred, truth), tol_m);
  } catch (const Error& e) {
    throw StageError("eval", pred_path.string(), e);
  }
  try {
    write_text_file(report_path, eval_report_json(rep));
    std::filesystem::path table = report_path;
    table.replace_extension(".txt");
    if (table != report_path) {
      write_text_file(table, render_routability_table({truth_row(rep, area), routability_row(rep, "Prediction", area)}));
    }
  } catch (const Error& e) {
    throw StageError("write", report_path.string(), e);
  }
  return rep;
}

}  // namespace pathweaver
