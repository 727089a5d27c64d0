#pragma once

// Signed distance to a triangle mesh made of overlapping, possibly open parts
// (the toy rig's palm and finger tubes), using generalized winding numbers for
// inside/outside.

#include "handsplat/rig.hpp"

#include <numeric>

namespace handsplat {

/// Closest point on triangle abc to p, with its barycentric coordinates.
inline Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                                 const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                                                 Eigen::Vector3d& bary) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return bary = {1, 0, 0}, a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return bary = {0, 1, 0}, b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return bary = {1 - v, v, 0}, a + v * ab;
  }
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return bary = {0, 0, 1}, c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return bary = {1 - w, 0, w}, a + w * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return bary = {0, 1 - w, w}, b + w * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  bary = {1 - v - w, v, w};
  return a + v * ab + w * ac;
}

/// Solid angle of triangle abc seen from p, signed by orientation.
inline double solid_angle(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                          const Eigen::Vector3d& c) {
  const Eigen::Vector3d x = a - p, y = b - p, z = c - p;
  const double lx = x.norm(), ly = y.norm(), lz = z.norm();
  const double num = x.dot(y.cross(z));
  const double den = lx * ly * lz + x.dot(y) * lz + x.dot(z) * ly + y.dot(z) * lx;
  return 2.0 * std::atan2(num, den);
}

/// Generalized winding number around p of the faces not flagged in `skip`: about 1 inside a closed outward-oriented part, 0 outside, and
/// graded near open boundaries.
inline double winding_number(const RowMatrix& V, const std::vector<Face>& faces, const Eigen::Vector3d& p,
                             const std::vector<std::uint8_t>* skip = nullptr) {
  double w = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    if (skip && (*skip)[f]) continue;
    const Face& t = faces[f];
    w += solid_angle(p, V.row(t[0]).transpose(), V.row(t[1]).transpose(), V.row(t[2]).transpose());
  }
  return w / (4.0 * M_PI);
}

/// Component label per face (faces sharing a vertex are connected).
inline std::vector<int> face_components(const std::vector<Face>& faces, std::size_t n_vertices) {
  std::vector<std::size_t> parent(n_vertices);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const Face& f : faces)
    for (int k = 1; k < 3; ++k) parent[find(f[static_cast<std::size_t>(k)])] = find(f[0]);
  std::vector<int> label(n_vertices, -1), out;
  int next = 0;
  for (const Face& f : faces) {
    const std::size_t r = find(f[0]);
    if (label[r] < 0) label[r] = next++;
    out.push_back(label[r]);
  }
  return out;
}

/// Faces whose centroid lies inside another component; they are not part of
/// the union's surface.
inline std::vector<std::uint8_t> buried_faces(const RowMatrix& V, const std::vector<Face>& faces) {
  const std::vector<int> comp = face_components(faces, static_cast<std::size_t>(V.rows()));
  std::vector<std::uint8_t> buried(faces.size(), 0);
#pragma omp parallel for schedule(static)
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    const Eigen::Vector3d c = (V.row(t[0]) + V.row(t[1]) + V.row(t[2])).transpose() / 3.0;
    std::vector<std::uint8_t> own(faces.size(), 0);
    for (std::size_t g = 0; g < faces.size(); ++g) own[g] = comp[g] == comp[f];
    buried[f] = winding_number(V, faces, c, &own) > 0.5;
  }
  return buried;
}

/// Signed distance to the union of the mesh's parts: negative where the
/// winding number exceeds 1/2, magnitude the distance to the nearest face not
/// buried inside another part.
inline Eigen::VectorXd mesh_signed_distance(const RowMatrix& V, const std::vector<Face>& faces, const RowMatrix& queries) {
  const std::vector<std::uint8_t> buried = buried_faces(V, faces);
  Eigen::VectorXd out(queries.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    const Eigen::Vector3d p = queries.row(q).transpose();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (buried[f]) continue;
      const Face& t = faces[f];
      Eigen::Vector3d bary;
      const Eigen::Vector3d c =
          closest_point_on_triangle(p, V.row(t[0]).transpose(), V.row(t[1]).transpose(), V.row(t[2]).transpose(), bary);
      best = std::min(best, (p - c).squaredNorm());
    }
    out(q) = (winding_number(V, faces, p) > 0.5 ? -1.0 : 1.0) * std::sqrt(best);
  }
  return out;
}

}  // namespace handsplat
