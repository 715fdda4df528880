#include "pathweaver/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <random>

#include <json.hpp>

#include "pathweaver/error.hpp"

namespace pathweaver {

using nlohmann::json;

Vec2 PixelTransform::invert(Vec2 xy) const {
  const double dt = det();
  const double x = xy.x - c;
  const double y = xy.y - f;
  return {(e * x - b * y) / dt, (a * y - d * x) / dt};
}

ProbabilityRaster ProbabilityRaster::blank(int width, int height, PixelTransform t, LonLat anchor,
                                           std::vector<std::string> classes) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::Size, "raster dimensions must be positive");
  if (classes.empty()) throw Error(ErrorKind::Config, "raster needs at least one class");
  ProbabilityRaster r;
  r.width = width;
  r.height = height;
  r.classes = std::move(classes);
  r.transform = t;
  r.anchor = anchor;
  r.planes.assign(r.classes.size(), std::vector<float>(r.pixel_count(), 0.0f));
  std::fill(r.planes[0].begin(), r.planes[0].end(), 1.0f);
  return r;
}

std::optional<std::size_t> ProbabilityRaster::class_index(std::string_view name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t ProbabilityRaster::require_class(std::string_view name) const {
  if (auto i = class_index(name)) return *i;
  throw Error(ErrorKind::Config, "raster has no '" + std::string(name) + "' class");
}

double ProbabilityRaster::resolution() const { return std::sqrt(std::abs(transform.det())); }

void ProbabilityRaster::validate(double simplex_tol) const {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::Validation, "raster dimensions must be positive");
  if (planes.size() != classes.size()) throw Error(ErrorKind::Validation, "plane count differs from class count");
  if (!(std::abs(transform.det()) > 0.0)) throw Error(ErrorKind::Validation, "raster transform is singular");
  for (const auto& p : planes) {
    if (p.size() != pixel_count()) throw Error(ErrorKind::Validation, "plane size differs from width*height");
  }
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    double sum = 0.0;
    for (const auto& p : planes) {
      const float v = p[i];
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
        throw Error(ErrorKind::Validation, "pixel " + std::to_string(i) + " has a value outside [0,1]");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > simplex_tol) {
      throw Error(ErrorKind::Validation, "pixel " + std::to_string(i) + " is off the probability simplex");
    }
  }
}

namespace {

constexpr std::string_view kMagic = "PPR1\n";

void put_f32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFFu));
}

float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k])) << (8 * k);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::string encode_ppr1(const ProbabilityRaster& r) {
  if (r.planes.size() != r.classes.size()) throw Error(ErrorKind::Validation, "plane count differs from class count");
  const PixelTransform& t = r.transform;
  const json header = {{"width", r.width},
                       {"height", r.height},
                       {"classes", r.classes},
                       {"transform", {t.a, t.b, t.c, t.d, t.e, t.f}},
                       {"crs", "local-meters"},
                       {"anchor", {r.anchor.lon, r.anchor.lat}}};
  std::string out(kMagic);
  out += header.dump();
  out += '\n';
  const std::size_t data_start = out.size();
  out.reserve(data_start + r.planes.size() * r.pixel_count() * 4);
  for (const auto& plane : r.planes) {
    if (plane.size() != r.pixel_count()) throw Error(ErrorKind::Validation, "plane size differs from width*height");
    for (float v : plane) {
      if (!std::isfinite(v)) throw FormatError(out.size(), "non-finite probability");
      put_f32(out, v);
    }
  }
  return out;
}

ProbabilityRaster decode_ppr1(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw FormatError(0, "missing PPR1 magic");
  const std::size_t header_end = bytes.find('\n', kMagic.size());
  if (header_end == std::string_view::npos) throw FormatError(kMagic.size(), "unterminated header line");
  ProbabilityRaster r;
  try {
    const json h = json::parse(bytes.substr(kMagic.size(), header_end - kMagic.size()));
    r.width = h.at("width").get<int>();
    r.height = h.at("height").get<int>();
    r.classes = h.at("classes").get<std::vector<std::string>>();
    const auto t = h.at("transform").get<std::vector<double>>();
    if (t.size() != 6) throw FormatError(kMagic.size(), "transform needs 6 coefficients");
    r.transform = {t[0], t[1], t[2], t[3], t[4], t[5]};
    if (h.at("crs").get<std::string>() != "local-meters") throw FormatError(kMagic.size(), "unsupported crs");
    const auto a = h.at("anchor").get<std::vector<double>>();
    if (a.size() != 2) throw FormatError(kMagic.size(), "anchor must be [lon, lat]");
    r.anchor = {a[0], a[1]};
  } catch (const json::exception& e) {
    throw FormatError(kMagic.size(), std::string("bad header: ") + e.what());
  }
  if (r.width <= 0 || r.height <= 0 || r.classes.empty()) throw FormatError(kMagic.size(), "empty raster shape");
  if (!(std::abs(r.transform.det()) > 0.0)) throw FormatError(kMagic.size(), "singular transform");

  const std::size_t data_start = header_end + 1;
  const std::size_t need = r.classes.size() * r.pixel_count() * 4;
  const std::size_t have = bytes.size() - data_start;
  if (have < need) throw FormatError(bytes.size(), "truncated planes");
  if (have > need) throw FormatError(data_start + need, "trailing bytes after planes");
  r.planes.assign(r.classes.size(), std::vector<float>(r.pixel_count()));
  std::size_t off = data_start;
  for (auto& plane : r.planes) {
    for (float& v : plane) {
      v = get_f32(bytes.data() + off);
      if (!std::isfinite(v)) throw FormatError(off, "non-finite probability");
      off += 4;
    }
  }
  return r;
}

void write_raster(const std::filesystem::path& path, const ProbabilityRaster& r) {
  r.validate();
  write_text_file(path, encode_ppr1(r));
}

ProbabilityRaster read_raster(const std::filesystem::path& path) {
  ProbabilityRaster r = decode_ppr1(read_text_file(path));
  r.validate();
  return r;
}

std::vector<std::pair<int, int>> row_spans(int width, std::span<const Vec2> poly, int row) {
  std::vector<std::pair<int, int>> spans;
  const std::size_t n = poly.size();
  if (n < 3) return spans;
  const double y = row + 0.5;
  std::vector<double> xs;
  std::vector<std::pair<double, double>> flat;  // boundary pieces lying on this row's center line
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = poly[i];
    const Vec2 q = poly[(i + 1) % n];
    if (p.y == y) flat.emplace_back(p.x, p.x);  // a vertex can touch the row without a crossing
    if (p.y == q.y) {
      if (p.y == y) flat.push_back(std::minmax(p.x, q.x));
      continue;
    }
    if ((p.y <= y && y < q.y) || (q.y <= y && y < p.y)) {
      xs.push_back(p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y));
    }
  }
  std::sort(xs.begin(), xs.end());
  for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
    const double x0 = xs[k];
    const double x1 = xs[k + 1];
    int c0 = std::max(0, static_cast<int>(std::floor(x0 - 0.5)));
    while (c0 < width && !(c0 + 0.5 > x0)) ++c0;
    int c1 = std::min(width - 1, static_cast<int>(std::ceil(x1 - 0.5)));
    while (c1 >= 0 && !(c1 + 0.5 < x1)) --c1;
    if (c0 > c1) continue;
    if (flat.empty()) {
      spans.emplace_back(c0, c1);
      continue;
    }
    // Split around centers that sit on a horizontal boundary edge.
    int start = c0;
    for (int col = c0; col <= c1; ++col) {
      const double cx = col + 0.5;
      const bool on_edge = std::any_of(flat.begin(), flat.end(),
                                       [&](const auto& f) { return cx >= f.first && cx <= f.second; });
      if (on_edge) {
        if (start < col) spans.emplace_back(start, col - 1);
        start = col + 1;
      }
    }
    if (start <= c1) spans.emplace_back(start, c1);
  }
  return spans;
}

namespace {

bool too_small(std::span<const Vec2> poly_px) {
  return poly_px.size() < 3 || std::abs(signed_area(poly_px)) < 1.0;
}

std::pair<int, int> row_range(const ProbabilityRaster& r, std::span<const Vec2> poly_px) {
  double lo = poly_px[0].y, hi = poly_px[0].y;
  for (Vec2 p : poly_px) {
    lo = std::min(lo, p.y);
    hi = std::max(hi, p.y);
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0, -1};
  const int r0 = static_cast<int>(std::max(0.0, std::floor(lo - 0.5)));
  const int r1 = static_cast<int>(std::min(static_cast<double>(r.height - 1), std::ceil(hi)));
  return {r0, r1};
}

}  // namespace

std::vector<PixelSample> pixels_in_polygon(const ProbabilityRaster& r, std::span<const Vec2> poly,
                                           std::string_view class_name) {
  const std::size_t plane = r.require_class(class_name);
  std::vector<Vec2> px;
  px.reserve(poly.size());
  for (Vec2 p : poly) px.push_back(r.world_to_pixel(p));
  std::vector<PixelSample> out;
  if (too_small(px)) return out;
  const auto [r0, r1] = row_range(r, px);
  for (int row = r0; row <= r1; ++row) {
    for (auto [c0, c1] : row_spans(r.width, px, row)) {
      for (int col = c0; col <= c1; ++col) {
        const std::size_t idx = static_cast<std::size_t>(row) * static_cast<std::size_t>(r.width) +
                                static_cast<std::size_t>(col);
        out.push_back({idx, r.planes[plane][idx]});
      }
    }
  }
  return out;
}

PolygonSum polygon_sum_px(const ProbabilityRaster& r, std::span<const Vec2> poly_px, std::size_t plane,
                          Exec exec) {
  PolygonSum total;
  if (too_small(poly_px)) return total;
  const auto [r0, r1] = row_range(r, poly_px);
  if (r1 < r0) return total;
  const int rows = r1 - r0 + 1;
  std::vector<double> row_sum(static_cast<std::size_t>(rows), 0.0);
  std::vector<std::size_t> row_count(static_cast<std::size_t>(rows), 0);
  const std::vector<float>& values = r.planes.at(plane);
  auto do_row = [&](int k) {
    const int row = r0 + k;
    double s = 0.0;
    std::size_t c = 0;
    for (auto [c0, c1] : row_spans(r.width, poly_px, row)) {
      const std::size_t base = static_cast<std::size_t>(row) * static_cast<std::size_t>(r.width);
      for (int col = c0; col <= c1; ++col) s += values[base + static_cast<std::size_t>(col)];
      c += static_cast<std::size_t>(c1 - c0 + 1);
    }
    row_sum[static_cast<std::size_t>(k)] = s;
    row_count[static_cast<std::size_t>(k)] = c;
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < rows; ++k) do_row(k);
  } else {
    for (int k = 0; k < rows; ++k) do_row(k);
  }
  for (int k = 0; k < rows; ++k) {
    total.sum += row_sum[static_cast<std::size_t>(k)];
    total.count += row_count[static_cast<std::size_t>(k)];
  }
  return total;
}

std::vector<float> gaussian_blur(std::span<const float> plane, int width, int height, double sigma_px,
                                 Exec exec) {
  std::vector<float> out(plane.begin(), plane.end());
  if (!(sigma_px > 0.0)) return out;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_px));
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  double norm_sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * k * k / (sigma_px * sigma_px));
    w[static_cast<std::size_t>(k + radius)] = v;
    norm_sum += v;
  }
  for (double& v : w) v /= norm_sum;

  const std::size_t W = static_cast<std::size_t>(width);
  std::vector<double> tmp(plane.size());
  auto horizontal = [&](int row) {
    const std::size_t base = static_cast<std::size_t>(row) * W;
    for (int col = 0; col < width; ++col) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int c = std::clamp(col + k, 0, width - 1);
        acc += w[static_cast<std::size_t>(k + radius)] * plane[base + static_cast<std::size_t>(c)];
      }
      tmp[base + static_cast<std::size_t>(col)] = acc;
    }
  };
  auto vertical = [&](int row) {
    for (int col = 0; col < width; ++col) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int rr = std::clamp(row + k, 0, height - 1);
        acc += w[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(rr) * W + static_cast<std::size_t>(col)];
      }
      out[static_cast<std::size_t>(row) * W + static_cast<std::size_t>(col)] = static_cast<float>(acc);
    }
  };
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int row = 0; row < height; ++row) horizontal(row);
#pragma omp parallel for schedule(static)
    for (int row = 0; row < height; ++row) vertical(row);
  } else {
    for (int row = 0; row < height; ++row) horizontal(row);
    for (int row = 0; row < height; ++row) vertical(row);
  }
  return out;
}

void renormalize_simplex(ProbabilityRaster& r) {
  const std::size_t n = r.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    double rest = 0.0;
    for (std::size_t k = 1; k < r.planes.size(); ++k) {
      float& v = r.planes[k][i];
      v = std::clamp(v, 0.0f, 1.0f);
      rest += v;
    }
    if (rest > 1.0) {
      for (std::size_t k = 1; k < r.planes.size(); ++k) r.planes[k][i] = static_cast<float>(r.planes[k][i] / rest);
      r.planes[0][i] = 0.0f;
    } else {
      r.planes[0][i] = static_cast<float>(1.0 - rest);
    }
  }
}

namespace {

void paint(std::vector<std::uint8_t>& labels, const ProbabilityRaster& r, const Polygon& poly_world,
           std::uint8_t label) {
  std::vector<Vec2> px;
  px.reserve(poly_world.size());
  for (Vec2 p : poly_world) px.push_back(r.world_to_pixel(p));
  if (px.size() < 3) return;
  const auto [r0, r1] = row_range(r, px);
  for (int row = r0; row <= r1; ++row) {
    for (auto [c0, c1] : row_spans(r.width, px, row)) {
      for (int col = c0; col <= c1; ++col) {
        labels[static_cast<std::size_t>(row) * static_cast<std::size_t>(r.width) + static_cast<std::size_t>(col)] = label;
      }
    }
  }
}

void paint_corridor(std::vector<std::uint8_t>& labels, const ProbabilityRaster& r, const Polyline& line,
                    double width, std::uint8_t label) {
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    if (distance(line[i], line[i + 1]) <= 0.0) continue;
    paint(labels, r, segment_buffer(line[i], line[i + 1], width / 2.0), label);
  }
  for (std::size_t i = 1; i + 1 < line.size(); ++i) paint(labels, r, circle_polygon(line[i], width / 2.0, 24), label);
}

}  // namespace

ProbabilityRaster synthesize_mask(const PedestrianGraph& truth, const SynthOptions& opt) {
  if (!(opt.resolution_m > 0.0)) throw Error(ErrorKind::Config, "resolution must be positive");
  const double res = opt.resolution_m;

  Box ext;
  if (opt.extent) {
    ext = *opt.extent;
  } else if (truth.empty()) {
    ext = Box{{-res / 2, -res / 2}, {res / 2, res / 2}};
  } else {
    std::vector<Vec2> pts;
    for (const PedNode& n : truth.nodes) pts.push_back(n.local_xy);
    for (const PedEdge& e : truth.edges) pts.insert(pts.end(), e.geometry.begin(), e.geometry.end());
    ext = bounding_box(pts);
    ext.min -= Vec2{opt.margin_m, opt.margin_m};
    ext.max += Vec2{opt.margin_m, opt.margin_m};
  }
  const double x0 = std::floor(ext.min.x / res) * res;
  const double y0 = std::floor(ext.min.y / res) * res;
  const double x1 = std::ceil(ext.max.x / res) * res;
  const double y1 = std::ceil(ext.max.y / res) * res;
  const double wpx = std::max(1.0, std::round((x1 - x0) / res));
  const double hpx = std::max(1.0, std::round((y1 - y0) / res));
  if (wpx > opt.max_side_px || hpx > opt.max_side_px) {
    throw Error(ErrorKind::Size, "graph extent needs a " + std::to_string(static_cast<long>(wpx)) + "x" +
                                     std::to_string(static_cast<long>(hpx)) + " raster, above the limit of " +
                                     std::to_string(opt.max_side_px));
  }
  const PixelTransform t{res, 0.0, x0, 0.0, -res, y0 + hpx * res};
  ProbabilityRaster r = ProbabilityRaster::blank(static_cast<int>(wpx), static_cast<int>(hpx), t, truth.frame.anchor());

  const std::size_t sidewalk = r.require_class("sidewalk");
  const std::size_t bulb = r.require_class("corner_bulb");
  const std::size_t crossing = r.require_class("crossing");
  std::vector<std::uint8_t> labels(r.pixel_count(), 0);
  for (const PedEdge& e : truth.edges) {
    if (e.kind == PedEdgeKind::Sidewalk) paint_corridor(labels, r, e.geometry, opt.sidewalk_width_m, static_cast<std::uint8_t>(sidewalk));
  }
  for (const PedEdge& e : truth.edges) {
    if (e.kind != PedEdgeKind::Sidewalk) paint_corridor(labels, r, e.geometry, opt.crossing_width_m, static_cast<std::uint8_t>(crossing));
  }
  std::map<CornerTag, std::vector<Vec2>> corners;
  for (const PedNode& n : truth.nodes) {
    if (!n.corner) continue;
    const Polygon disc = circle_polygon(n.local_xy, opt.corner_dilation_m, 32);
    auto& pts = corners[*n.corner];
    pts.insert(pts.end(), disc.begin(), disc.end());
  }
  for (auto& [tag, pts] : corners) paint(labels, r, convex_hull(std::move(pts)), static_cast<std::uint8_t>(bulb));

  std::mt19937_64 rng(opt.noise_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) continue;
    double p = 1.0;
    if (opt.noise_amplitude > 0.0) p = 1.0 - opt.noise_amplitude * unit(rng);
    r.planes[labels[i]][i] = static_cast<float>(p);
    r.planes[0][i] = static_cast<float>(1.0 - p);
  }
  if (opt.blur_sigma_px > 0.0) {
    for (auto& plane : r.planes) plane = gaussian_blur(plane, r.width, r.height, opt.blur_sigma_px, opt.exec);
  }
  renormalize_simplex(r);
  return r;
}

}  // namespace pathweaver
