#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathweaver/error.hpp"
#include "pathweaver/metrics.hpp"
#include "pathweaver/pedestrianfer.hpp"
#include "pathweaver/raster.hpp"
#include "pathweaver/refine.hpp"
#include "pathweaver/report.hpp"
#include "pathweaver/street_model.hpp"

namespace pathweaver {

/// A module error tagged with the pipeline stage and input that produced it.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string path, const Error& cause)
      : Error(cause.kind(), "[" + stage + "] " + (path.empty() ? "" : path + ": ") + cause.what()),
        stage_(std::move(stage)),
        path_(std::move(path)) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string stage_;
  std::string path_;
};

/// 2 for input/config validation failures, 3 for everything else.
int exit_code_for(ErrorKind kind);

struct PipelineConfig {
  std::filesystem::path streets;
  std::optional<std::filesystem::path> mask;
  std::filesystem::path out_graph;
  std::optional<std::filesystem::path> out_stats;
  std::optional<LonLat> anchor;  // defaults to the mask anchor, else the street vertex centroid
  std::string area = "area";
  std::uint64_t seed = 42;
  PedestrianferConfig pedestrianfer;
  RefineConfig refine;
  SynthOptions synth;
  double tol_m = 3.0;
};

/// Reads the sections of a config object; missing keys keep their defaults.
/// Throws Config on wrongly typed values.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig base = {});

/// Counts and summed lengths by edge kind. Crossings are counted as crossing
/// lines (the two halves of a split crossing count once).
AreaStats area_stats(const PedestrianGraph& g, const StreetNetwork& net, std::string area,
                     std::size_t min_degree = 3);

struct ProphetResult {
  PedestrianGraph graph;
  AreaStats stats;
  std::vector<std::string> warnings;
};

/// load -> hypothesize -> refine (when a mask is given) -> write.
ProphetResult run_prophet(const PipelineConfig& cfg);

/// Partition sites: street intersections, or every street node when there are none.
VoronoiPartition evaluation_partition(const StreetNetwork& net, const PedestrianGraph& pred,
                                      const PedestrianGraph& truth);

/// Writes the JSON report to `report` and the rendered table next to it (.txt).
EvalReport run_eval(const std::filesystem::path& pred, const std::filesystem::path& truth,
                    const std::filesystem::path& streets, const std::filesystem::path& report, double tol_m = 3.0,
                    const std::string& area = "area");

}  // namespace pathweaver
