#pragma once

// Procedural articulated hand: an ellipsoidal palm plus capsule-like finger
// tubes. Same tensor layout as a MANO template (16 bones with the default
// config), meters, hand pointing along +y with the palm plane at z = 0.

#include "handsplat/rig.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace handsplat {

struct ToyRigConfig {
  int fingers = 5;
  int segments_per_finger = 3;
  double spacing = 0.0072;  // target distance between neighboring vertices, meters
  int n_shape = 10;
  double skin_sigma = 0.006;
  double shape_amplitude = 0.002;
  double pose_amplitude = 0.0005;
  std::uint64_t seed = 7;
};

namespace detail {

struct FingerSpec {
  Eigen::Vector3d base;
  Eigen::Vector3d dir;
  std::array<double, 3> lengths;
  double radius;
};

inline FingerSpec finger_spec(int f) {
  // index, middle, ring, pinky, thumb; extra fingers reuse the layout shifted.
  static const FingerSpec table[5] = {
      {{0.030, 0.090, 0.0}, {0.12, 1.0, 0.0}, {0.040, 0.025, 0.020}, 0.0075},
      {{0.010, 0.094, 0.0}, {0.03, 1.0, 0.0}, {0.045, 0.028, 0.022}, 0.0078},
      {{-0.010, 0.092, 0.0}, {-0.06, 1.0, 0.0}, {0.042, 0.026, 0.021}, 0.0074},
      {{-0.029, 0.086, 0.0}, {-0.18, 1.0, 0.0}, {0.032, 0.020, 0.018}, 0.0066},
      {{0.036, 0.032, 0.004}, {1.0, 0.9, 0.25}, {0.035, 0.030, 0.025}, 0.0090},
  };
  FingerSpec s = table[f % 5];
  if (f >= 5) s.base.z() += 0.02 * (f / 5);
  s.dir.normalize();
  return s;
}

inline double segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

/// Orient a triangle so its normal points away from `inside`.
inline Face oriented(const RowMatrix& V, Face f, const Eigen::Vector3d& inside) {
  const Eigen::Vector3d a = V.row(f[0]), b = V.row(f[1]), c = V.row(f[2]);
  if ((b - a).cross(c - a).dot((a + b + c) / 3.0 - inside) < 0.0) std::swap(f[1], f[2]);
  return f;
}

/// Angle on the ellipse (a cos t, c sin t) at fraction `f` of its perimeter.
inline double ellipse_arc_angle(double a, double c, double f) {
  constexpr int kSteps = 2048;
  std::array<double, kSteps + 1> len{};
  for (int i = 1; i <= kSteps; ++i) {
    const double t = 2.0 * M_PI * (i - 0.5) / kSteps;
    len[static_cast<std::size_t>(i)] =
        len[static_cast<std::size_t>(i - 1)] + std::hypot(a * std::sin(t), c * std::cos(t)) * 2.0 * M_PI / kSteps;
  }
  const double target = f * len[kSteps];
  const auto it = std::lower_bound(len.begin(), len.end(), target);
  const auto i = static_cast<int>(std::max<std::ptrdiff_t>(1, it - len.begin()));
  const double l0 = len[static_cast<std::size_t>(i - 1)], l1 = len[static_cast<std::size_t>(i)];
  return 2.0 * M_PI * (i - 1 + (target - l0) / (l1 - l0)) / kSteps;
}

/// Triangulates the band between two closed rings whose vertices sit at
/// fractions k / na and k / nb of the way around.
inline void stitch_rings(std::uint32_t a0, std::uint32_t na, std::uint32_t b0, std::uint32_t nb, std::vector<Face>& out) {
  std::uint32_t i = 0, j = 0;
  while (i < na || j < nb) {
    const auto a = a0 + i % na, b = b0 + j % nb;
    // Advance along whichever ring has the nearer next vertex.
    const bool step_a = j == nb || (i < na && static_cast<double>(i + 1) / na <= static_cast<double>(j + 1) / nb);
    if (step_a) {
      out.push_back({a, b, a0 + (i + 1) % na});
      ++i;
    } else {
      out.push_back({a, b, b0 + (j + 1) % nb});
      ++j;
    }
  }
}

/// Smooth seeded vector field: one random plane wave per basis column.
inline RowMatrix seeded_bases(const RowMatrix& V, int columns, double amplitude, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RowMatrix B(3 * V.rows(), columns);
  for (int k = 0; k < columns; ++k) {
    const Eigen::Vector3d omega = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 60.0;
    const Eigen::Vector3d phase(u(rng) * M_PI, u(rng) * M_PI, u(rng) * M_PI);
    const double amp = amplitude * (0.5 + 0.5 * std::abs(u(rng)));
    for (Eigen::Index v = 0; v < V.rows(); ++v) {
      const double arg = omega.dot(V.row(v).transpose());
      for (int c = 0; c < 3; ++c) B(3 * v + c, k) = amp * std::sin(arg + phase[c]);
    }
  }
  return B;
}

}  // namespace detail

inline TemplateRig build_toy_rig(const ToyRigConfig& cfg = {}) {
  if (cfg.fingers < 1 || cfg.segments_per_finger < 1 || !(cfg.spacing > 0.0))
    throw std::invalid_argument("build_toy_rig: degenerate configuration");
  auto finger_ring_size = [&](int f) {
    const double perimeter = 2.0 * M_PI * detail::finger_spec(f).radius * 1.05;
    return std::max(4, static_cast<int>(std::lround(perimeter / cfg.spacing)));
  };
  const int F = cfg.fingers, S = cfg.segments_per_finger;
  const int J = 1 + F * S;
  std::vector<Eigen::Vector3d> verts;
  std::vector<Face> faces;
  std::vector<int> owner;  // -1 for palm, finger index otherwise

  // Palm ellipsoid, poles on the y axis. Rings are evenly spaced in latitude;
  // each ring gets as many vertices as its perimeter needs at `spacing`.
  const Eigen::Vector3d pc(0.0, 0.05, 0.0), pa(0.045, 0.05, 0.015);
  const int R = std::max(2, static_cast<int>(std::lround(M_PI * pa.y() / cfg.spacing)) - 1);
  const double equator = 2.0 * M_PI * std::sqrt(0.5 * (pa.x() * pa.x() + pa.z() * pa.z()));
  verts.push_back(pc + Eigen::Vector3d(0, -pa.y(), 0));
  std::vector<std::uint32_t> ring_first, ring_count;
  for (int i = 1; i <= R; ++i) {
    const double phi = M_PI * i / (R + 1);
    const int K = std::max(3, static_cast<int>(std::lround(std::sin(phi) * equator / cfg.spacing)));
    ring_first.push_back(static_cast<std::uint32_t>(verts.size()));
    ring_count.push_back(static_cast<std::uint32_t>(K));
    for (int k = 0; k < K; ++k) {
      const double psi = detail::ellipse_arc_angle(pa.x(), pa.z(), static_cast<double>(k) / K);
      verts.push_back(pc + Eigen::Vector3d(pa.x() * std::sin(phi) * std::cos(psi), -pa.y() * std::cos(phi),
                                           pa.z() * std::sin(phi) * std::sin(psi)));
    }
  }
  verts.push_back(pc + Eigen::Vector3d(0, pa.y(), 0));
  owner.assign(verts.size(), -1);
  const auto top = static_cast<std::uint32_t>(verts.size() - 1);
  std::vector<Face> raw;
  for (std::uint32_t k = 0; k < ring_count.front(); ++k)
    raw.push_back({0, ring_first.front() + k, ring_first.front() + (k + 1) % ring_count.front()});
  for (std::uint32_t k = 0; k < ring_count.back(); ++k)
    raw.push_back({top, ring_first.back() + k, ring_first.back() + (k + 1) % ring_count.back()});
  for (int i = 0; i + 1 < R; ++i) detail::stitch_rings(ring_first[i], ring_count[i], ring_first[i + 1], ring_count[i + 1], raw);

  RowMatrix joints = RowMatrix::Zero(J, 3);
  std::vector<int> parents(static_cast<std::size_t>(J), 0);
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> bone_seg(static_cast<std::size_t>(J));
  bone_seg[0] = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0, 0.07, 0)};

  struct TubeRing {
    std::uint32_t first;
    Eigen::Vector3d center;
  };
  std::vector<std::vector<TubeRing>> finger_rings(static_cast<std::size_t>(F));
  std::vector<std::pair<std::uint32_t, Eigen::Vector3d>> caps;

  for (int f = 0; f < F; ++f) {
    const auto spec = detail::finger_spec(f);
    Eigen::Vector3d u = spec.dir.cross(Eigen::Vector3d::UnitZ());
    if (u.norm() < 1e-6) u = Eigen::Vector3d::UnitX();
    u.normalize();
    const Eigen::Vector3d v = spec.dir.cross(u).normalized();
    const int M = finger_ring_size(f);
    Eigen::Vector3d start = spec.base;
    double total = 0.0;
    for (int s = 0; s < S; ++s) total += spec.lengths[static_cast<std::size_t>(s % 3)];
    double travelled = 0.0;
    for (int s = 0; s < S; ++s) {
      const int j = 1 + f * S + s;
      const double len = spec.lengths[static_cast<std::size_t>(s % 3)];
      const Eigen::Vector3d end = start + spec.dir * len;
      joints.row(j) = start.transpose();
      parents[static_cast<std::size_t>(j)] = s == 0 ? 0 : j - 1;
      bone_seg[static_cast<std::size_t>(j)] = {start, end};
      const int rings = std::max(1, static_cast<int>(std::lround(len / cfg.spacing)));
      for (int r = 0; r < rings; ++r) {
        const double t = static_cast<double>(r) / rings;
        const Eigen::Vector3d c = start + spec.dir * (len * t);
        const double radius = spec.radius * (1.0 - 0.25 * (travelled + len * t) / total);
        finger_rings[static_cast<std::size_t>(f)].push_back({static_cast<std::uint32_t>(verts.size()), c});
        for (int k = 0; k < M; ++k) {
          const double a = 2.0 * M_PI * k / M;
          verts.push_back(c + radius * (std::cos(a) * u + 1.1 * std::sin(a) * v));
          owner.push_back(f);
        }
      }
      travelled += len;
      start = end;
    }
    // Tip cap slightly beyond the last ring.
    const auto& last = finger_rings[static_cast<std::size_t>(f)].back();
    const Eigen::Vector3d tip = last.center + spec.dir * (0.6 * cfg.spacing + 0.5 * spec.radius);
    caps.push_back({static_cast<std::uint32_t>(verts.size()), tip});
    verts.push_back(tip);
    owner.push_back(f);
  }

  RowMatrix V(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) V.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  for (const Face& f : raw) faces.push_back(detail::oriented(V, f, pc));
  for (int f = 0; f < F; ++f) {
    const auto M = static_cast<std::uint32_t>(finger_ring_size(f));
    const auto& rings = finger_rings[static_cast<std::size_t>(f)];
    for (std::size_t r = 0; r + 1 < rings.size(); ++r) {
      const Eigen::Vector3d mid = 0.5 * (rings[r].center + rings[r + 1].center);
      for (std::uint32_t k = 0; k < M; ++k) {
        const std::uint32_t a = rings[r].first + k, b = rings[r].first + (k + 1) % M;
        const std::uint32_t c = rings[r + 1].first + k, d = rings[r + 1].first + (k + 1) % M;
        faces.push_back(detail::oriented(V, {a, c, d}, mid));
        faces.push_back(detail::oriented(V, {a, d, b}, mid));
      }
    }
    const auto& last = rings.back();
    const auto& cap = caps[static_cast<std::size_t>(f)];
    const Eigen::Vector3d inside = 0.5 * (last.center + cap.second);
    for (std::uint32_t k = 0; k < M; ++k)
      faces.push_back(detail::oriented(V, {last.first + k, last.first + (k + 1) % M, cap.first}, inside));
  }

  // Skinning: Gaussian falloff of the distance to each bone segment. Finger
  // vertices only see their own finger's bones and the root; the root bone is a
  // fat capsule covering the palm.
  const double palm_radius = 0.035;
  RowMatrix W = RowMatrix::Zero(V.rows(), J);
  const double inv2s2 = 1.0 / (2.0 * cfg.skin_sigma * cfg.skin_sigma);
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    const Eigen::Vector3d p = V.row(i).transpose();
    std::vector<double> d(static_cast<std::size_t>(J), std::numeric_limits<double>::infinity());
    d[0] = std::max(0.0, detail::segment_distance(p, bone_seg[0].first, bone_seg[0].second) - palm_radius);
    const int f_own = owner[static_cast<std::size_t>(i)];
    for (int j = 1; j < J; ++j) {
      const int f = (j - 1) / S;
      if (f_own >= 0 && f != f_own) continue;
      d[static_cast<std::size_t>(j)] =
          detail::segment_distance(p, bone_seg[static_cast<std::size_t>(j)].first, bone_seg[static_cast<std::size_t>(j)].second);
    }
    const double dmin = *std::min_element(d.begin(), d.end());
    for (int j = 0; j < J; ++j) {
      const double dj = d[static_cast<std::size_t>(j)];
      if (std::isfinite(dj)) W(i, j) = std::exp(-(dj * dj - dmin * dmin) * inv2s2);
    }
    W.row(i) /= W.row(i).sum();
  }

  std::mt19937_64 rng(cfg.seed);
  TemplateRig rig;
  rig.vertices = V;
  rig.faces = std::move(faces);
  rig.weights = std::move(W);
  rig.shape_bases = detail::seeded_bases(V, cfg.n_shape, cfg.shape_amplitude, rng);
  rig.pose_bases = detail::seeded_bases(V, 9 * (J - 1), cfg.pose_amplitude, rng);
  rig.parents = std::move(parents);
  rig.rest_joints = std::move(joints);
  rig.validate();
  return rig;
}

/// Reduced hand for fast tests: same topology rules, a few hundred vertices.
inline ToyRigConfig small_toy_rig_config() {
  ToyRigConfig c;
  c.spacing = 0.012;
  return c;
}

/// A straight chain of `bones` bones along +x with `n_vertices` seeded vertices
/// scattered around it. No faces.
inline TemplateRig make_chain_rig(std::size_t n_vertices, std::size_t bones, std::uint64_t seed = 1,
                                  std::size_t n_shape = 10) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double len = 0.05;
  TemplateRig rig;
  rig.rest_joints = RowMatrix::Zero(static_cast<Eigen::Index>(bones), 3);
  rig.parents.resize(bones);
  for (std::size_t j = 0; j < bones; ++j) {
    rig.rest_joints(static_cast<Eigen::Index>(j), 0) = len * static_cast<double>(j);
    rig.parents[j] = j == 0 ? 0 : static_cast<int>(j) - 1;
  }
  rig.vertices.resize(static_cast<Eigen::Index>(n_vertices), 3);
  rig.weights.resize(static_cast<Eigen::Index>(n_vertices), static_cast<Eigen::Index>(bones));
  for (Eigen::Index i = 0; i < rig.vertices.rows(); ++i) {
    const double x = (0.5 + 0.5 * u(rng)) * len * static_cast<double>(bones);
    rig.vertices.row(i) << x, 0.01 * u(rng), 0.01 * u(rng);
    for (std::size_t j = 0; j < bones; ++j) {
      const double c = len * (static_cast<double>(j) + 0.5);
      rig.weights(i, static_cast<Eigen::Index>(j)) = std::exp(-std::pow((x - c) / len, 2));
    }
    rig.weights.row(i) /= rig.weights.row(i).sum();
  }
  rig.shape_bases = detail::seeded_bases(rig.vertices, static_cast<int>(n_shape), 0.002, rng);
  rig.pose_bases = detail::seeded_bases(rig.vertices, static_cast<int>(9 * (bones - 1)), 0.001, rng);
  rig.validate();
  return rig;
}

}  // namespace handsplat
