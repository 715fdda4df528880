#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pathweaver/geometry.hpp"
#include "pathweaver/pedestrian_graph.hpp"
#include "pathweaver/street_model.hpp"

namespace pathweaver {

/// Pixel (col, row) to local meters: x = a*col + b*row + c, y = d*col + e*row + f.
struct PixelTransform {
  double a = 1.0, b = 0.0, c = 0.0;
  double d = 0.0, e = 1.0, f = 0.0;

  double det() const { return a * e - b * d; }
  Vec2 apply(Vec2 px) const { return {a * px.x + b * px.y + c, d * px.x + e * px.y + f}; }
  Vec2 invert(Vec2 xy) const;
  bool operator==(const PixelTransform&) const = default;
};

enum class Exec { Serial, Parallel };

inline const std::vector<std::string>& default_classes() {
  static const std::vector<std::string> k{"background", "sidewalk", "corner_bulb", "crossing"};
  return k;
}

struct ProbabilityRaster {
  int width = 0;
  int height = 0;
  std::vector<std::string> classes = default_classes();
  PixelTransform transform;
  LonLat anchor;
  std::vector<std::vector<float>> planes;  // one row-major plane per class

  /// All-background raster (first class = 1).
  static ProbabilityRaster blank(int width, int height, PixelTransform t, LonLat anchor,
                                 std::vector<std::string> classes = default_classes());

  std::optional<std::size_t> class_index(std::string_view name) const;
  std::size_t require_class(std::string_view name) const;
  float at(std::size_t plane, int col, int row) const {
    return planes[plane][static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
                         static_cast<std::size_t>(col)];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  double resolution() const;  // meters per pixel (sqrt |det|)

  Vec2 world_to_pixel(Vec2 xy) const { return transform.invert(xy); }
  Vec2 pixel_to_world(Vec2 px) const { return transform.apply(px); }

  /// Throws Validation on shape, range or simplex violations.
  void validate(double simplex_tol = 1e-4) const;
};

/// Serializes to the PPR1 container (magic line, JSON header line, float32 LE planes).
std::string encode_ppr1(const ProbabilityRaster& r);
ProbabilityRaster decode_ppr1(std::string_view bytes);
void write_raster(const std::filesystem::path& path, const ProbabilityRaster& r);
ProbabilityRaster read_raster(const std::filesystem::path& path);

struct PixelSample {
  std::size_t index = 0;  // row * width + col
  float p = 0.0f;
};

/// Pixels whose centers lie strictly inside `poly` (local meters), in scanline order.
std::vector<PixelSample> pixels_in_polygon(const ProbabilityRaster& r, std::span<const Vec2> poly,
                                           std::string_view class_name);

struct PolygonSum {
  double sum = 0.0;
  std::size_t count = 0;
};

/// Sum and count of plane values over pixel centers strictly inside a polygon
/// given in pixel coordinates. Rows are accumulated separately and then added
/// in row order, so both execution modes give identical results.
PolygonSum polygon_sum_px(const ProbabilityRaster& r, std::span<const Vec2> poly_px, std::size_t plane,
                          Exec exec = Exec::Serial);

/// Inclusive column ranges of the pixel centers on `row` that lie strictly
/// inside the polygon (pixel coordinates).
std::vector<std::pair<int, int>> row_spans(int width, std::span<const Vec2> poly_px, int row);

struct SynthOptions {
  double resolution_m = 0.3;
  double sidewalk_width_m = 2.0;
  double crossing_width_m = 3.0;
  double corner_dilation_m = 2.0;
  double blur_sigma_px = 2.0;
  double margin_m = 10.0;
  int max_side_px = 8192;
  std::optional<Box> extent;  // defaults to the graph bbox plus margin
  std::uint64_t noise_seed = 0;
  double noise_amplitude = 0.0;  // multiplicative jitter on labelled pixels
  Exec exec = Exec::Parallel;
};

/// Rasterizes a graph into one-hot class labels (corner_bulb over crossing
/// over sidewalk over background), blurs each plane and renormalizes.
ProbabilityRaster synthesize_mask(const PedestrianGraph& truth, const SynthOptions& options = {});

/// Separable Gaussian blur with clamped borders; sigma <= 0 is a no-op.
std::vector<float> gaussian_blur(std::span<const float> plane, int width, int height, double sigma_px,
                                 Exec exec = Exec::Serial);

/// Renormalizes every pixel onto the probability simplex; class 0 absorbs
/// the remainder when the other classes sum below one.
void renormalize_simplex(ProbabilityRaster& r);

}  // namespace pathweaver
