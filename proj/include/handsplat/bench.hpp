#pragma once

// Forward render throughput: project and rasterize a synthetic point cloud.

#include "handsplat/camera.hpp"
#include "handsplat/renderer.hpp"

#include <chrono>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace handsplat {

/// Reference figure for context only (seconds per frame on a desktop GPU).
inline constexpr double kReferenceSecondsPerFrame = 0.018;

struct BenchConfig {
  std::size_t points = 100000;
  int resolution = 256;
  int frames = 10;
  int warmup = 2;
  int threads = 1;  // 0 leaves the OpenMP default
  bool single_precision = false;
  std::uint64_t seed = 0;
};

struct BenchResult {
  std::size_t points = 0;
  int resolution = 0;
  int threads = 1;
  bool single_precision = false;
  double ms_per_frame = 0.0;
  double coverage = 0.0;  // fraction of pixels with alpha > 0.5
};

/// Points uniform on a 6 cm sphere 40 cm in front of the camera, splat radius
/// about the nearest-neighbour spacing, so pixels see a few overlapping splats.
inline RowMatrix bench_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  RowMatrix p(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Vector3d d(g(rng), g(rng), g(rng));
    p.row(i) = 0.06 * d.normalized().transpose();
  }
  return p;
}

inline double bench_radius(std::size_t n) { return 1.5 * 0.06 * std::sqrt(4.0 * M_PI / static_cast<double>(std::max<std::size_t>(n, 1))); }

inline BenchResult run_bench(const BenchConfig& cfg) {
  if (cfg.points == 0 || cfg.resolution < 1 || cfg.frames < 1) throw std::invalid_argument("bench: empty workload");
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  const int threads = omp_get_max_threads();
#else
  const int threads = 1;
#endif
  const RowMatrix pts = bench_cloud(cfg.points, cfg.seed);
  std::mt19937_64 rng(cfg.seed + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMatrix colors(pts.rows(), 3);
  for (double& c : colors.reshaped()) c = u(rng);
  const int res = cfg.resolution;
  const Camera cam = look_at({0, 0, -0.4}, {0, 0, 0}, {0, 1, 0}, 2.5 * res, res, res);
  const double radius = bench_radius(cfg.points);

  using clock = std::chrono::steady_clock;
  double coverage = 0.0;
  auto frame = [&]<class Scalar>(Scalar) {
    const auto target = rasterize(project_points<Scalar>(pts, colors, cam, radius), res, res);
    std::size_t covered = 0;
    for (auto a : target.alpha) covered += a > Scalar(0.5);
    coverage = static_cast<double>(covered) / static_cast<double>(target.alpha.size());
  };
  auto once = [&]() {
    if (cfg.single_precision) frame(0.0f);
    else frame(0.0);
  };
  for (int i = 0; i < cfg.warmup; ++i) once();
  const auto t0 = clock::now();
  for (int i = 0; i < cfg.frames; ++i) once();
  const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count() / cfg.frames;

  BenchResult r;
  r.points = cfg.points;
  r.resolution = res;
  r.threads = threads;
  r.single_precision = cfg.single_precision;
  r.ms_per_frame = ms;
  r.coverage = coverage;
  return r;
}

inline std::string bench_csv_header() { return "points,resolution,threads,precision,ms_per_frame,reference_ms_per_frame"; }

inline std::string bench_csv_row(const BenchResult& r) {
  return fmt::format("{},{},{},{},{:.3f},{:.1f}", r.points, r.resolution, r.threads,
                     r.single_precision ? "float32" : "float64", r.ms_per_frame, 1000.0 * kReferenceSecondsPerFrame);
}

}  // namespace handsplat
