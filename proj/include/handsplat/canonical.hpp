#pragma once

// Canonical point set: learnable coordinates, the shared splat radius and its
// upsampling schedule, visibility bookkeeping and pruning.

#include "handsplat/rig.hpp"

#include <random>

namespace handsplat {

/// Median distance from each row to its nearest other row.
inline double median_nn_distance(const RowMatrix& p) {
  if (p.rows() < 2) throw std::invalid_argument("median_nn_distance: need at least two points");
  std::vector<double> d(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < p.rows(); ++k)
      if (k != i) best = std::min(best, (p.row(k) - p.row(i)).squaredNorm());
    d[static_cast<std::size_t>(i)] = std::sqrt(best);
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

class PruneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CanonicalPointSet {
  ad::Parameter coords{"points.coords", Tensor(0, 3)};
  double radius0 = 0.0;
  double radius = 0.0;
  int generation = 0;
  std::vector<int> point_generation;
  std::vector<std::uint8_t> visible;
  PerPointRigData binding;

  std::size_t size() const { return coords.value.rows(); }
  RowMatrix positions() const { return coords.value.mat(); }

  /// Generation-0 set: one point per template vertex, radius = median
  /// nearest-neighbour spacing of the template.
  static CanonicalPointSet from_template(const TemplateRig& rig) {
    CanonicalPointSet s;
    s.coords = ad::Parameter("points.coords", Tensor::from_matrix(rig.vertices));
    s.radius0 = s.radius = median_nn_distance(rig.vertices);
    s.point_generation.assign(rig.num_vertices(), 0);
    s.visible.assign(rig.num_vertices(), 0);
    s.rebind(rig);
    return s;
  }

  void rebind(const TemplateRig& rig) { binding = bind_canonical_points(rig, positions()); }
  void reset_visibility() { std::fill(visible.begin(), visible.end(), std::uint8_t{0}); }
};

/// One child per point, uniform inside the sphere of the current radius; then
/// the generation advances and the radius shrinks by 1/sqrt(2).
inline void upsample(CanonicalPointSet& s, const TemplateRig& rig, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t n = s.size();
  Tensor next(2 * n, 3);
  std::copy_n(s.coords.value.data(), 3 * n, next.data());
  for (std::size_t i = 0; i < n; ++i) {
    double x, y, z;
    do {
      x = u(rng);
      y = u(rng);
      z = u(rng);
    } while (x * x + y * y + z * z > 1.0);
    next(n + i, 0) = s.coords.value(i, 0) + s.radius * x;
    next(n + i, 1) = s.coords.value(i, 1) + s.radius * y;
    next(n + i, 2) = s.coords.value(i, 2) + s.radius * z;
  }
  s.coords.value = std::move(next);
  s.coords.zero_grad();
  ++s.generation;
  s.radius *= M_SQRT1_2;
  s.point_generation.resize(2 * n, s.generation);
  s.visible.resize(2 * n, 0);
  s.rebind(rig);
}

/// Removes points never marked visible. Generation-0 points are exempt.
/// Visibility flags of survivors are kept, so pruning twice in one epoch is a
/// no-op; flags are cleared at the start of each epoch.
inline std::size_t prune(CanonicalPointSet& s, const TemplateRig& rig, double max_fraction = 0.5) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.visible[i] || s.point_generation[i] == 0) keep.push_back(i);
  const std::size_t removed = s.size() - keep.size();
  if (removed == 0) return 0;
  if (static_cast<double>(removed) > max_fraction * static_cast<double>(s.size()))
    throw PruneError(fmt::format(
        "prune: {} of {} points were never inside the template silhouette; check cameras and masks", removed,
        s.size()));
  Tensor next(keep.size(), 3);
  std::vector<int> gen;
  std::vector<std::uint8_t> vis;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    std::copy_n(s.coords.value.data() + 3 * keep[k], 3, next.data() + 3 * k);
    gen.push_back(s.point_generation[keep[k]]);
    vis.push_back(s.visible[keep[k]]);
  }
  s.coords.value = std::move(next);
  s.coords.zero_grad();
  s.point_generation = std::move(gen);
  s.visible = std::move(vis);
  s.rebind(rig);
  return removed;
}

/// One Gaussian sample per canonical point, sigma = 1.5 radius.
inline Tensor sample_omega(const CanonicalPointSet& s, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double sigma = 1.5 * s.radius;
  Tensor out(s.size(), 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.coords.value[i] + sigma * n(rng);
  return out;
}

}  // namespace handsplat
