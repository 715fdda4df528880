#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pathweaver/metrics.hpp"

namespace pathweaver {

/// One row of the routability table.
struct RoutabilityRow {
  std::string method;
  std::string area;
  std::uint64_t nodes = 0;
  std::uint64_t edges = 0;
  double avg_degree = 0.0;
  double avg_cc = 0.0;
  double avg_bc = 0.0;
  double f1 = 0.0;
  double traversability = 0.0;
};

/// Aggregate counts and lengths of a generated area.
struct AreaStats {
  std::string area;
  std::uint64_t sidewalk_count = 0;
  double sidewalk_length_m = 0.0;
  std::uint64_t crossing_count = 0;
  double crossing_length_m = 0.0;
  std::uint64_t intersection_count = 0;
};

RoutabilityRow routability_row(const EvalReport& r, std::string method, std::string area);
/// The ground-truth side of a report (F1 and similarity 1 by definition).
RoutabilityRow truth_row(const EvalReport& r, std::string area);

std::string render_routability_table(const std::vector<RoutabilityRow>& rows);
std::string render_area_table(const std::vector<AreaStats>& rows);

/// JSON arrays of row objects keyed by the struct field names.
std::vector<RoutabilityRow> parse_routability_rows(std::string_view json_text);
std::vector<AreaStats> parse_area_rows(std::string_view json_text);
std::string area_stats_json(const AreaStats& s);

}  // namespace pathweaver
