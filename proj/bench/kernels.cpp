// Serial reference vs. OpenMP kernels. Arg 0 is Exec::Serial, 1 is Exec::Parallel.
#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "pathweaver/metrics.hpp"
#include "pathweaver/pedestrianfer.hpp"
#include "pathweaver/pipeline.hpp"
#include "pathweaver/raster.hpp"

using namespace pathweaver;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

ProbabilityRaster noise_raster(int w, int h) {
  ProbabilityRaster r = ProbabilityRaster::blank(w, h, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0}, fixtures::kAnchor);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const std::size_t bulb = r.require_class("corner_bulb");
  for (std::size_t i = 0; i < r.pixel_count(); ++i) {
    const float v = u(rng);
    r.planes[0][i] = 1.0f - v;
    r.planes[bulb][i] = v;
  }
  return r;
}

void BM_polygon_sum(benchmark::State& state) {
  const ProbabilityRaster r = noise_raster(2048, 2048);
  const Polygon poly = circle_polygon({1024.3, 1023.7}, 900.0, 64);
  const std::size_t plane = r.require_class("corner_bulb");
  for (auto _ : state) benchmark::DoNotOptimize(polygon_sum_px(r, poly, plane, exec_of(state)));
}
BENCHMARK(BM_polygon_sum)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_gaussian_blur(benchmark::State& state) {
  const ProbabilityRaster r = noise_raster(1024, 1024);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gaussian_blur(r.planes[0], r.width, r.height, 2.0, exec_of(state)));
  }
}
BENCHMARK(BM_gaussian_blur)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_local_cc_bc(benchmark::State& state) {
  const StreetNetwork net = fixtures::load(fixtures::grid(6, 6));
  const PedestrianGraph g = hypothesize(net);
  const VoronoiPartition part = evaluation_partition(net, g, g);
  for (auto _ : state) benchmark::DoNotOptimize(local_cc_bc(g, part, exec_of(state)));
}
BENCHMARK(BM_local_cc_bc)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_traversability(benchmark::State& state) {
  const StreetNetwork net = fixtures::load(fixtures::grid(6, 6));
  const PedestrianGraph g = hypothesize(net);
  const PedestrianGraph j = fixtures::jitter(g, 2.0, 3);
  const VoronoiPartition part = evaluation_partition(net, j, g);
  for (auto _ : state) benchmark::DoNotOptimize(traversability_similarity(j, g, part, exec_of(state)));
}
BENCHMARK(BM_traversability)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
