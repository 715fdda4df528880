#include "pathweaver/report.hpp"

#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "pathweaver/error.hpp"

namespace pathweaver {

using nlohmann::json;

RoutabilityRow routability_row(const EvalReport& r, std::string method, std::string area) {
  RoutabilityRow row;
  row.method = std::move(method);
  row.area = std::move(area);
  row.nodes = r.pred.nodes;
  row.edges = r.pred.edges;
  row.avg_degree = r.pred.avg_degree;
  row.avg_cc = r.pred_local.avg_cc;
  row.avg_bc = r.pred_local.avg_bc;
  row.f1 = r.retrieval.f1;
  row.traversability = r.similarity.mean;
  return row;
}

RoutabilityRow truth_row(const EvalReport& r, std::string area) {
  RoutabilityRow row;
  row.method = "Ground Truth";
  row.area = std::move(area);
  row.nodes = r.truth.nodes;
  row.edges = r.truth.edges;
  row.avg_degree = r.truth.avg_degree;
  row.avg_cc = r.truth_local.avg_cc;
  row.avg_bc = r.truth_local.avg_bc;
  row.f1 = 1.0;
  row.traversability = 1.0;
  return row;
}

std::string render_routability_table(const std::vector<RoutabilityRow>& rows) {
  std::size_t wm = 6, wa = 4;
  for (const RoutabilityRow& r : rows) {
    wm = std::max(wm, r.method.size());
    wa = std::max(wa, r.area.size());
  }
  std::string out;
  out += fmt::format("{:<{}} | {:<{}} | {:>8} | {:>8} | {:>10} | {:>6} | {:>6} | {:>17} | {:>24}\n", "Method", wm,
                     "Area", wa, "# nodes", "# edges", "avg degree", "avg CC", "avg BC", "edge-retrieval F1",
                     "TraversabilitySimilarity");
  out += std::string(wm + wa + 8 + 8 + 10 + 6 + 6 + 17 + 24 + 3 * 8, '-') + "\n";
  for (const RoutabilityRow& r : rows) {
    out += fmt::format("{:<{}} | {:<{}} | {:>8} | {:>8} | {:>10.2f} | {:>6.2f} | {:>6.2f} | {:>17.2f} | {:>24.2f}\n",
                       r.method, wm, r.area, wa, r.nodes, r.edges, r.avg_degree, r.avg_cc, r.avg_bc, r.f1,
                       r.traversability);
  }
  return out;
}

std::string render_area_table(const std::vector<AreaStats>& rows) {
  std::size_t wa = 4;
  for (const AreaStats& r : rows) wa = std::max(wa, r.area.size());
  std::string out;
  out += fmt::format("{:<{}} | {:>11} | {:>19} | {:>11} | {:>19} | {:>15}\n", "Area", wa, "# sidewalks",
                     "sidewalk length (m)", "# crossings", "crossing length (m)", "# intersections");
  out += std::string(wa + 11 + 19 + 11 + 19 + 15 + 5 * 3, '-') + "\n";
  for (const AreaStats& r : rows) {
    out += fmt::format("{:<{}} | {:>11} | {:>19.0f} | {:>11} | {:>19.0f} | {:>15}\n", r.area, wa, r.sidewalk_count,
                       std::round(r.sidewalk_length_m), r.crossing_count, std::round(r.crossing_length_m),
                       r.intersection_count);
  }
  return out;
}

std::vector<RoutabilityRow> parse_routability_rows(std::string_view json_text) {
  std::vector<RoutabilityRow> rows;
  try {
    for (const json& j : json::parse(json_text)) {
      RoutabilityRow r;
      r.method = j.at("method").get<std::string>();
      r.area = j.at("area").get<std::string>();
      r.nodes = j.at("nodes").get<std::uint64_t>();
      r.edges = j.at("edges").get<std::uint64_t>();
      r.avg_degree = j.at("avg_degree").get<double>();
      r.avg_cc = j.at("avg_cc").get<double>();
      r.avg_bc = j.at("avg_bc").get<double>();
      r.f1 = j.at("f1").get<double>();
      r.traversability = j.at("traversability").get<double>();
      rows.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("routability rows: ") + e.what());
  }
  return rows;
}

std::vector<AreaStats> parse_area_rows(std::string_view json_text) {
  std::vector<AreaStats> rows;
  try {
    for (const json& j : json::parse(json_text)) {
      AreaStats r;
      r.area = j.at("area").get<std::string>();
      r.sidewalk_count = j.at("sidewalk_count").get<std::uint64_t>();
      r.sidewalk_length_m = j.at("sidewalk_length_m").get<double>();
      r.crossing_count = j.at("crossing_count").get<std::uint64_t>();
      r.crossing_length_m = j.at("crossing_length_m").get<double>();
      r.intersection_count = j.at("intersection_count").get<std::uint64_t>();
      rows.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("area rows: ") + e.what());
  }
  return rows;
}

std::string area_stats_json(const AreaStats& s) {
  nlohmann::ordered_json j{{"area", s.area},
                           {"sidewalk_count", s.sidewalk_count},
                           {"sidewalk_length_m", s.sidewalk_length_m},
                           {"crossing_count", s.crossing_count},
                           {"crossing_length_m", s.crossing_length_m},
                           {"intersection_count", s.intersection_count}};
  return j.dump(2) + "\n";
}

}  // namespace pathweaver
