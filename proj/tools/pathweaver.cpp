// pathweaver command line: hypothesize | synth | refine | eval | task | stats.
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathweaver/pedestrian_graph.hpp"
#include "pathweaver/pipeline.hpp"
#include "pathweaver/tasking.hpp"

using namespace pathweaver;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

template <typename F>
auto stage(const std::string& name, const std::string& path, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, path, e);
  }
}

LonLat parse_lonlat(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(s);
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorKind::Config, "expected 'lon,lat', got '" + s + "'");
  }
}

// --config is read before the flags so that flags override it.
json preload_config(int argc, char** argv) {
  std::string path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) path = argv[i + 1];
    if (a.rfind("--config=", 0) == 0) path = a.substr(9);
  }
  if (path.empty()) return json::object();
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw StageError("config", path, Error(ErrorKind::Config, e.what()));
  } catch (const Error& e) {
    throw StageError("config", path, e);
  }
}

template <typename T>
T section_value(const json& cfg, const char* section, const char* key, T fallback) {
  if (!cfg.contains(section) || !cfg.at(section).contains(key)) return fallback;
  try {
    return cfg.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("config ") + section + "." + key + ": " + e.what());
  }
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorKind::Config, std::string("missing required option ") + flag);
}

int run(int argc, char** argv) {
  const json file_cfg = preload_config(argc, argv);
  PipelineConfig cfg = pipeline_config_from_json(file_cfg);

  CLI::App app{"Pedestrian pathway graphs from street centerlines"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON config; command-line flags override it");

  std::string streets = cfg.streets.string();
  std::string mask = cfg.mask ? cfg.mask->string() : "";
  std::string out = cfg.out_graph.string();
  std::string stats_out = cfg.out_stats ? cfg.out_stats->string() : "";
  std::string anchor = cfg.anchor ? std::to_string(cfg.anchor->lon) + "," + std::to_string(cfg.anchor->lat) : "";
  std::string regime = cfg.pedestrianfer.regime == SidewalkRegime::Metadata ? "metadata" : "full";

  // hypothesize
  auto* hyp = app.add_subcommand("hypothesize", "Sidewalks, crossings and curbs from a street network");
  hyp->add_option("--streets", streets, "street GeoJSON");
  hyp->add_option("--out", out, "output graph GeoJSON");
  hyp->add_option("--anchor", anchor, "projection origin 'lon,lat'");
  hyp->add_option("--regime", regime, "full | metadata")->check(CLI::IsMember({"full", "metadata"}));
  hyp->add_option("--offset-m", cfg.pedestrianfer.default_offset_m, "default sidewalk offset");

  // synth
  std::string graph_path;
  auto* syn = app.add_subcommand("synth", "Synthesize a probability raster from a graph");
  syn->add_option("--graph", graph_path, "graph GeoJSON");
  syn->add_option("--out", out, "output PPR1 raster");
  syn->add_option("--resolution-m", cfg.synth.resolution_m);
  syn->add_option("--blur-sigma-px", cfg.synth.blur_sigma_px);
  syn->add_option("--corner-dilation-m", cfg.synth.corner_dilation_m);
  syn->add_option("--noise", cfg.synth.noise_amplitude);
  syn->add_option("--noise-seed", cfg.synth.noise_seed);

  // refine
  auto* ref = app.add_subcommand("refine", "Refine a hypothesized graph against a raster");
  ref->add_option("--graph", graph_path, "hypothesized graph GeoJSON");
  ref->add_option("--mask", mask, "PPR1 raster");
  ref->add_option("--streets", streets, "street GeoJSON");
  ref->add_option("--out", out, "output graph GeoJSON");
  ref->add_option("--threshold", cfg.refine.prune_threshold, "corner pruning threshold on mean probability");
  ref->add_option("--iterations", cfg.refine.spsa.iterations);
  ref->add_option("--seed", cfg.seed);
  ref->add_option("--buffer-m", cfg.refine.confidence_buffer_m);

  // eval
  std::string pred, truth;
  std::string report = section_value<std::string>(file_cfg, "eval", "report", "");
  auto* ev = app.add_subcommand("eval", "Routability metrics of a prediction against ground truth");
  ev->add_option("--pred", pred);
  ev->add_option("--truth", truth);
  ev->add_option("--streets", streets);
  ev->add_option("--tol-m", cfg.tol_m);
  ev->add_option("--report", report, "report JSON path; the table goes next to it as .txt");
  ev->add_option("--area", cfg.area);

  // task
  auto* task = app.add_subcommand("task", "Task partitioning and lock service");
  task->require_subcommand(1);
  task->fallthrough();
  std::string project_path = section_value<std::string>(file_cfg, "task", "project", "");
  std::string center = section_value<std::string>(file_cfg, "task", "center", "");
  double radius_m = section_value(file_cfg, "task", "radius_m", kProjectRadiusM);
  std::string project_id = section_value<std::string>(file_cfg, "task", "id", "project");
  std::string socket_path = section_value<std::string>(file_cfg, "task", "socket", "pathweaver.sock");
  std::string log_path = section_value<std::string>(file_cfg, "task", "log", "");
  std::int64_t lease_ms = section_value(file_cfg, "task", "lease_ms", kDefaultLeaseMs);
  SimulationConfig sim;
  sim.clients = section_value(file_cfg, "task", "clients", sim.clients);
  sim.ops_per_client = section_value(file_cfg, "task", "ops", sim.ops_per_client);
  int seeds = section_value(file_cfg, "task", "seeds", 30);
  std::uint64_t seed_base = section_value<std::uint64_t>(file_cfg, "task", "seed_base", 1);
  std::int64_t sim_lease = section_value(file_cfg, "task", "sim_lease_ms", sim.lease_ms);

  auto* part = task->add_subcommand("partition", "Split a project disc into intersection tasks");
  part->add_option("--streets", streets);
  part->add_option("--center", center, "'lon,lat'");
  part->add_option("--radius-m", radius_m);
  part->add_option("--id", project_id);
  part->add_option("--project", project_path, "output project JSON");
  auto* serve = task->add_subcommand("serve", "Serve the lock protocol on a Unix socket");
  serve->add_option("--project", project_path);
  serve->add_option("--socket", socket_path);
  serve->add_option("--log", log_path, "JSONL event log (replayed on start)");
  serve->add_option("--lease-ms", lease_ms);
  auto* simulate_cmd = task->add_subcommand("simulate", "Concurrent client simulation with invariant checks");
  simulate_cmd->add_option("--project", project_path);
  simulate_cmd->add_option("--clients", sim.clients);
  simulate_cmd->add_option("--ops", sim.ops_per_client, "operations per client");
  simulate_cmd->add_option("--seeds", seeds, "number of seeded runs");
  simulate_cmd->add_option("--seed-base", seed_base);
  simulate_cmd->add_option("--lease-ms", sim_lease);

  // stats
  std::string render_areas, render_routability;
  auto* st = app.add_subcommand("stats", "Run the full pipeline and report area statistics, or render row files");
  st->add_option("--streets", streets);
  st->add_option("--mask", mask);
  st->add_option("--out", out);
  st->add_option("--stats", stats_out, "area statistics JSON");
  st->add_option("--area", cfg.area);
  st->add_option("--seed", cfg.seed);
  st->add_option("--render-areas", render_areas, "JSON rows to print as an area table");
  st->add_option("--render-routability", render_routability, "JSON rows to print as a routability table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  cfg.pedestrianfer.regime = regime == "metadata" ? SidewalkRegime::Metadata : SidewalkRegime::Full;
  if (!anchor.empty()) cfg.anchor = parse_lonlat(anchor);

  if (*hyp) {
    require(streets, "--streets");
    require(out, "--out");
    const StreetNetwork net = stage("load", streets, [&] {
      LoadOptions lo;
      lo.anchor = cfg.anchor;
      return load_street_network_file(streets, lo);
    });
    const Hypothesis h = stage("hypothesize", streets, [&] { return hypothesize_detailed(net, cfg.pedestrianfer); });
    stage("write", out, [&] {
      write_text_file(out, write_graph_geojson(h.graph));
      return 0;
    });
    for (const std::string& w : h.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "hypothesized " << h.graph.nodes.size() << " nodes, " << h.graph.edges.size() << " edges\n";
  } else if (*syn) {
    require(graph_path, "--graph");
    require(out, "--out");
    const PedestrianGraph g = stage("load", graph_path, [&] { return read_graph_file(graph_path); });
    const ProbabilityRaster r = stage("synth", graph_path, [&] { return synthesize_mask(g, cfg.synth); });
    stage("write", out, [&] {
      write_raster(out, r);
      return 0;
    });
    std::cout << "raster " << r.width << "x" << r.height << " at " << r.resolution() << " m/px\n";
  } else if (*ref) {
    require(graph_path, "--graph");
    require(mask, "--mask");
    require(streets, "--streets");
    require(out, "--out");
    const PedestrianGraph hypo = stage("load", graph_path, [&] { return read_graph_file(graph_path); });
    const ProbabilityRaster r = stage("load", mask, [&] { return read_raster(mask); });
    const StreetNetwork net = stage("load", streets, [&] {
      LoadOptions lo;
      lo.anchor = hypo.frame.anchor();
      return load_street_network_file(streets, lo);
    });
    RefineConfig rc = cfg.refine;
    rc.spsa.seed = cfg.seed;
    rc.min_degree = cfg.pedestrianfer.min_degree;
    const RefineResult res = stage("refine", mask, [&] { return refine_graph_detailed(hypo, r, net, rc); });
    stage("write", out, [&] {
      write_text_file(out, write_graph_geojson(res.graph));
      return 0;
    });
    std::size_t kept = 0;
    for (const CornerReport& c : res.corners) kept += c.kept ? 1 : 0;
    for (const std::string& w : res.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "corners kept " << kept << " of " << res.corners.size() << "\n";
  } else if (*ev) {
    require(pred, "--pred");
    require(truth, "--truth");
    require(streets, "--streets");
    require(report, "--report");
    const EvalReport rep = run_eval(pred, truth, streets, report, cfg.tol_m, cfg.area);
    std::cout << render_routability_table({truth_row(rep, cfg.area), routability_row(rep, "Prediction", cfg.area)});
  } else if (*task) {
    if (*part) {
      require(streets, "--streets");
      require(center, "--center");
      require(project_path, "--project");
      const LonLat c = parse_lonlat(center);
      const StreetNetwork net = stage("load", streets, [&] {
        LoadOptions lo;
        lo.anchor = cfg.anchor ? cfg.anchor : std::optional<LonLat>(c);
        return load_street_network_file(streets, lo);
      });
      const Project p = stage("partition", streets, [&] { return partition_project(net, c, radius_m, project_id); });
      stage("write", project_path, [&] {
        write_text_file(project_path, project_json(p));
        return 0;
      });
      std::cout << "project " << p.id << ": " << p.tasks.size() << " tasks\n";
    } else {
      require(project_path, "--project");
      const Project p = stage("load", project_path, [&] { return parse_project(read_text_file(project_path)); });
      if (*serve) {
        std::vector<json> prior;
        if (!log_path.empty() && std::filesystem::exists(log_path)) {
          prior = stage("load", log_path, [&] { return read_event_log(log_path); });
        }
        TaskManagerOptions opt;
        opt.lease_ms = lease_ms;
        if (!log_path.empty()) opt.log_path = log_path;
        TaskManager m(p, opt, wall_clock_ms(), prior);
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "serving " << p.tasks.size() << " tasks on " << socket_path << "\n";
        stage("serve", socket_path, [&] {
          serve_unix_socket(m, socket_path, g_stop);
          return 0;
        });
      } else {
        bool clean = true;
        for (int s = 0; s < seeds; ++s) {
          sim.seed = seed_base + static_cast<std::uint64_t>(s);
          sim.lease_ms = sim_lease;
          const SimulationReport r = stage("simulate", project_path, [&] { return simulate(p, sim); });
          const bool ok = r.violations.empty() && r.replay_equal && r.prefix_replay_equal;
          clean = clean && ok;
          std::printf("seed %llu: %s ops=%llu grants=%llu commits=%llu expiries=%llu violations=%zu replay=%s %.2fs\n",
                      static_cast<unsigned long long>(sim.seed), ok ? "ok" : "FAILED",
                      static_cast<unsigned long long>(r.ops), static_cast<unsigned long long>(r.grants),
                      static_cast<unsigned long long>(r.commits), static_cast<unsigned long long>(r.expiries),
                      r.violations.size(), r.replay_equal && r.prefix_replay_equal ? "equal" : "DIFFERENT", r.seconds);
          for (std::size_t i = 0; i < std::min<std::size_t>(r.violations.size(), 5); ++i) {
            std::printf("  %s\n", r.violations[i].c_str());
          }
        }
        return clean ? 0 : 3;
      }
    }
  } else if (*st) {
    if (!render_areas.empty() || !render_routability.empty()) {
      if (!render_areas.empty()) {
        std::cout << render_area_table(
            stage("load", render_areas, [&] { return parse_area_rows(read_text_file(render_areas)); }));
      }
      if (!render_routability.empty()) {
        std::cout << render_routability_table(stage(
            "load", render_routability, [&] { return parse_routability_rows(read_text_file(render_routability)); }));
      }
      return 0;
    }
    require(streets, "--streets");
    cfg.streets = streets;
    cfg.mask = mask.empty() ? std::nullopt : std::optional<std::filesystem::path>(mask);
    cfg.out_graph = out;
    cfg.out_stats = stats_out.empty() ? std::nullopt : std::optional<std::filesystem::path>(stats_out);
    const ProphetResult res = run_prophet(cfg);
    for (const std::string& w : res.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << render_area_table({res.stats});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "pathweaver: error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "pathweaver: error: " << e.what() << "\n";
    return 3;
  }
}
