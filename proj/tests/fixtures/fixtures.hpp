#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pathweaver/geometry.hpp"
#include "pathweaver/pedestrian_graph.hpp"
#include "pathweaver/refine.hpp"
#include "pathweaver/street_model.hpp"

namespace fixtures {

using pathweaver::LonLat;
using pathweaver::Polyline;
using pathweaver::Vec2;

inline constexpr LonLat kAnchor{-122.3321, 47.6062};

struct Street {
  Polyline xy;  // local meters about kAnchor
  std::optional<bool> left;
  std::optional<bool> right;
  std::optional<double> offset_m;
  std::vector<Vec2> marked;
};

/// GeoJSON FeatureCollection of the streets, coordinates unprojected about `anchor`.
std::string streets_geojson(const std::vector<Street>& streets, LonLat anchor = kAnchor);

/// Loads streets with the projection anchored at `anchor`, so local
/// coordinates equal the fixture's meters.
pathweaver::StreetNetwork load(const std::vector<Street>& streets, LonLat anchor = kAnchor);

/// rows x cols nodes on a square lattice, one street per lattice edge.
std::vector<Street> grid(int rows, int cols, double spacing = 100.0);
/// Four arms of length `arm` meeting at the origin.
std::vector<Street> plus(double arm = 100.0);
/// Through street along x plus a stem going south.
std::vector<Street> tee(double arm = 100.0);
/// Two streets meeting at a right angle at the origin.
std::vector<Street> ell(double arm = 100.0);
std::vector<Street> square(double side = 100.0);
std::vector<Street> single(double length = 100.0);

/// Copy of `g` with every node moved by an independent offset of at most
/// `max_m` meters (uniform direction and radius); edges follow their nodes.
pathweaver::PedestrianGraph jitter(const pathweaver::PedestrianGraph& g, double max_m, unsigned seed);

/// Copy of `g` with each street corner translated rigidly by an independent
/// offset of at most `max_m` meters; edges and midpoints are rebuilt.
pathweaver::PedestrianGraph jitter_corners(const pathweaver::PedestrianGraph& g, double max_m, unsigned seed,
                                           const pathweaver::StreetNetwork* net = nullptr);

}  // namespace fixtures
