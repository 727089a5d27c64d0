#pragma once

// Small closed test meshes.

#include "handsplat/rig.hpp"

namespace handsplat {

struct TriMesh {
  RowMatrix vertices;
  std::vector<Face> faces;
};

/// Outward-oriented UV sphere with poles on the z axis.
inline TriMesh uv_sphere(int rings, int segments, double r, const Eigen::RowVector3d& center = Eigen::RowVector3d::Zero()) {
  if (rings < 2 || segments < 3) throw std::invalid_argument("uv_sphere: need rings >= 2 and segments >= 3");
  TriMesh m;
  std::vector<Eigen::RowVector3d> pts{{0, 0, r}};
  for (int i = 1; i < rings; ++i) {
    const double th = M_PI * i / rings;
    for (int j = 0; j < segments; ++j) {
      const double ph = 2 * M_PI * j / segments;
      pts.emplace_back(r * std::sin(th) * std::cos(ph), r * std::sin(th) * std::sin(ph), r * std::cos(th));
    }
  }
  pts.emplace_back(0, 0, -r);
  m.vertices.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = pts[i] + center;
  auto ring = [&](int i, int j) { return static_cast<std::uint32_t>(1 + (i - 1) * segments + (j % segments)); };
  const auto south = static_cast<std::uint32_t>(pts.size() - 1);
  for (int j = 0; j < segments; ++j) {
    m.faces.push_back({0, ring(1, j), ring(1, j + 1)});
    for (int i = 1; i + 1 < rings; ++i) {
      m.faces.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.faces.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
    m.faces.push_back({ring(rings - 1, j), south, ring(rings - 1, j + 1)});
  }
  return m;
}

}  // namespace handsplat
