#pragma once

// Phong relighting with a binary ray-cast self-shadow over a mesh rebuilt from
// the canonical points.

#include "handsplat/canonical.hpp"

#include <numeric>

namespace handsplat {

struct ApproximateMesh {
  RowMatrix vertices;  // posed
  std::vector<Face> faces;
  RowMatrix normals;   // unit, area weighted
  std::vector<std::size_t> source_point;  // canonical point used for each vertex
};

/// Area-weighted unit vertex normals. Vertices touching only degenerate faces
/// point away from the centroid.
inline RowMatrix vertex_normals(const RowMatrix& vertices, const std::vector<Face>& faces) {
  RowMatrix n = RowMatrix::Zero(vertices.rows(), 3);
  for (const Face& f : faces) {
    const Eigen::Vector3d a = vertices.row(f[0]), b = vertices.row(f[1]), c = vertices.row(f[2]);
    const Eigen::RowVector3d fn = (b - a).cross(c - a).transpose();
    for (auto i : f) n.row(i) += fn;
  }
  const Eigen::RowVector3d centroid = vertices.colwise().mean();
  for (Eigen::Index v = 0; v < n.rows(); ++v) {
    if (n.row(v).norm() < 1e-14) n.row(v) = vertices.row(v) - centroid;
    if (n.row(v).norm() < 1e-14) n.row(v) << 0, 0, 1;
    n.row(v).normalize();
  }
  return n;
}

/// Vertex v is the posed position of the canonical point nearest to template
/// vertex v; faces are the template's.
inline ApproximateMesh approximate_mesh(const CanonicalPointSet& points, const TemplateRig& rig, const PoseParams& pose) {
  ApproximateMesh m;
  m.source_point = nearest_rows(rig.vertices, points.positions());
  const RowMatrix all = points.positions();
  RowMatrix chosen(rig.vertices.rows(), 3);
  PerPointRigData data;
  data.weights.resize(rig.vertices.rows(), rig.weights.cols());
  for (Eigen::Index v = 0; v < rig.vertices.rows(); ++v) {
    const std::size_t p = m.source_point[static_cast<std::size_t>(v)];
    chosen.row(v) = all.row(static_cast<Eigen::Index>(p));
    data.nearest.push_back(points.binding.nearest[p]);
    data.weights.row(v) = points.binding.weights.row(static_cast<Eigen::Index>(p));
  }
  m.vertices = deform_points(rig, data, forward_kinematics(rig, pose), pose, chosen);
  m.faces = rig.faces;
  m.normals = vertex_normals(m.vertices, m.faces);
  return m;
}

struct PhongLight {
  Eigen::Vector3d direction{0.0, 0.0, -1.0};  // unit, from the surface toward the light
  double ka = 0.3, kd = 0.7, ks = 0.1;
  double shininess = 16.0;

  void validate() const {
    if (std::abs(direction.norm() - 1.0) > 1e-9) throw std::invalid_argument("light direction must be unit length");
    for (double k : {ka, kd, ks})
      if (!(k >= 0.0 && k <= 1.0)) throw std::invalid_argument("Phong coefficients must lie in [0, 1]");
    if (!(shininess >= 1.0)) throw std::invalid_argument("Phong shininess must be at least 1");
  }
};

/// c = base (ka + kd max(0, n.l)) + ks max(0, r.v)^alpha, times the optional
/// per-row shadow term. Normals N x 3 (unit), base N x 3.
inline RowMatrix phong_shade(const RowMatrix& normals, const PhongLight& light, const Eigen::Vector3d& view_dir,
                             const RowMatrix& base, const std::vector<std::uint8_t>* shadow = nullptr) {
  if (normals.rows() != base.rows() || normals.cols() != 3 || base.cols() != 3)
    throw ShapeError("phong_shade: normals and colors disagree");
  if (shadow && shadow->size() != static_cast<std::size_t>(normals.rows()))
    throw ShapeError("phong_shade: shadow term has the wrong length");
  const Eigen::Vector3d l = light.direction;
  RowMatrix out(base.rows(), 3);
  for (Eigen::Index i = 0; i < base.rows(); ++i) {
    const Eigen::Vector3d n = normals.row(i).transpose();
    const double ndl = n.dot(l);
    const Eigen::Vector3d r = 2.0 * ndl * n - l;
    const double spec = std::pow(std::max(0.0, r.dot(view_dir)), light.shininess);
    const double s = shadow ? static_cast<double>((*shadow)[static_cast<std::size_t>(i)]) : 1.0;
    for (int c = 0; c < 3; ++c) {
      double v = base(i, c) * (light.ka + light.kd * std::max(0.0, ndl)) + light.ks * spec;
      if (shadow) v *= s;
      out(i, c) = v;
    }
  }
  return out;
}

/// Moller-Trumbore ray / triangle test; returns the hit distance or a negative value.
inline double ray_triangle(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& a,
                           const Eigen::Vector3d& b, const Eigen::Vector3d& c, double eps = 1e-12) {
  const Eigen::Vector3d e1 = b - a, e2 = c - a;
  const Eigen::Vector3d p = d.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < eps) return -1.0;
  const double inv = 1.0 / det;
  const Eigen::Vector3d s = o - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return -1.0;
  const Eigen::Vector3d q = s.cross(e1);
  const double v = d.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return -1.0;
  return e2.dot(q) * inv;
}

/// Bounding-volume hierarchy over mesh triangles (median split on the longest
/// axis of the centroid bounds).
class TriangleBvh {
 public:
  TriangleBvh(const RowMatrix& vertices, const std::vector<Face>& faces) : v_(vertices), f_(faces) {
    order_.resize(f_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    centroid_.resize(f_.size());
    for (std::size_t i = 0; i < f_.size(); ++i)
      centroid_[i] = (corner(i, 0) + corner(i, 1) + corner(i, 2)) / 3.0;
    if (!f_.empty()) build(0, f_.size());
  }

  /// True if the ray o + t d, t in (t_min, inf), hits a face that does not
  /// contain vertex `skip_vertex`.
  bool occluded(const Eigen::Vector3d& o, const Eigen::Vector3d& d, std::size_t skip_vertex, double t_min) const {
    if (nodes_.empty()) return false;
    const Eigen::Vector3d inv = d.cwiseInverse();
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
      const Node& n = nodes_[stack.back()];
      stack.pop_back();
      if (!slab(n.lo, n.hi, o, inv)) continue;
      if (n.count > 0) {
        for (std::size_t k = n.first; k < n.first + n.count; ++k) {
          const Face& f = f_[order_[k]];
          if (f[0] == skip_vertex || f[1] == skip_vertex || f[2] == skip_vertex) continue;
          const double t = ray_triangle(o, d, corner(order_[k], 0), corner(order_[k], 1), corner(order_[k], 2));
          if (t > t_min) return true;
        }
      } else {
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }
    return false;
  }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    std::size_t first = 0, count = 0, left = 0, right = 0;
  };

  Eigen::Vector3d corner(std::size_t face, int k) const {
    return v_.row(static_cast<Eigen::Index>(f_[face][static_cast<std::size_t>(k)])).transpose();
  }

  static bool slab(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Eigen::Vector3d& o,
                   const Eigen::Vector3d& inv) {
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      double ta = (lo[a] - o[a]) * inv[a], tb = (hi[a] - o[a]) * inv[a];
      if (std::isnan(ta) || std::isnan(tb)) {
        if (o[a] < lo[a] || o[a] > hi[a]) return false;
        continue;
      }
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    return true;
  }

  std::size_t build(std::size_t first, std::size_t count) {
    const std::size_t id = nodes_.size();
    nodes_.emplace_back();
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    Eigen::Vector3d clo = lo, chi = hi;
    for (std::size_t k = first; k < first + count; ++k) {
      for (int c = 0; c < 3; ++c) {
        lo = lo.cwiseMin(corner(order_[k], c));
        hi = hi.cwiseMax(corner(order_[k], c));
      }
      clo = clo.cwiseMin(centroid_[order_[k]]);
      chi = chi.cwiseMax(centroid_[order_[k]]);
    }
    const double pad = 1e-12 * std::max(1.0, (hi - lo).norm());
    nodes_[id].lo = lo.array() - pad;
    nodes_[id].hi = hi.array() + pad;
    if (count <= 4) {
      nodes_[id].first = first;
      nodes_[id].count = count;
      return id;
    }
    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    const auto mid = order_.begin() + static_cast<std::ptrdiff_t>(first + count / 2);
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(first), mid,
                     order_.begin() + static_cast<std::ptrdiff_t>(first + count), [&](std::size_t a, std::size_t b) {
                       return centroid_[a][axis] < centroid_[b][axis] || (centroid_[a][axis] == centroid_[b][axis] && a < b);
                     });
    const std::size_t left = build(first, count / 2);
    const std::size_t right = build(first + count / 2, count - count / 2);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  const RowMatrix& v_;
  const std::vector<Face>& f_;
  std::vector<std::size_t> order_;
  std::vector<Eigen::Vector3d> centroid_;
  std::vector<Node> nodes_;
};

/// 0 where the ray from a vertex toward the light hits a face not containing
/// that vertex, else 1. Vertices whose normal faces away from the light are
/// already dark in the diffuse term and get 1.
inline std::vector<std::uint8_t> self_shadow(const RowMatrix& vertices, const RowMatrix& normals,
                                             const std::vector<Face>& faces, const PhongLight& light) {
  const TriangleBvh bvh(vertices, faces);
  const auto n = static_cast<std::size_t>(vertices.rows());
  std::vector<std::uint8_t> out(n, 1);
  double extent = 0.0;
  if (n > 0) extent = (vertices.colwise().maxCoeff() - vertices.colwise().minCoeff()).norm();
  const double t_min = 1e-9 * std::max(1.0, extent);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    if (normals.row(e).dot(light.direction.transpose()) <= 0.0) continue;
    if (bvh.occluded(vertices.row(e).transpose(), light.direction, i, t_min)) out[i] = 0;
  }
  return out;
}

inline std::vector<std::uint8_t> self_shadow(const ApproximateMesh& m, const PhongLight& light) {
  return self_shadow(m.vertices, m.normals, m.faces, light);
}

}  // namespace handsplat
