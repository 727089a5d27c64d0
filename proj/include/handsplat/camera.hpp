#pragma once

// Pinhole camera, world -> camera rotation R and translation t. Camera axes:
// x right, y down, z forward; pixel centers sit at integer coordinates.

#include "handsplat/ops.hpp"

#include <Eigen/Geometry>

namespace handsplat {

inline constexpr double kNearPlane = 1e-4;

struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw std::invalid_argument("camera: fx and fy must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: width and height must be positive");
    if (!(R * R.transpose()).isApprox(Eigen::Matrix3d::Identity(), 1e-6) || std::abs(R.determinant() - 1.0) > 1e-6)
      throw std::invalid_argument("camera: rotation is not orthonormal with det +1");
  }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& p) const { return R * p + t; }
  Eigen::Vector3d position() const { return -R.transpose() * t; }
};

/// Camera at `eye` looking at `target`; `up` is the approximate world up.
inline Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up, double f,
                      int width, int height) {
  const Eigen::Vector3d z = (target - eye).normalized();
  const Eigen::Vector3d x = z.cross(up).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Camera c;
  c.R.row(0) = x.transpose();
  c.R.row(1) = y.transpose();
  c.R.row(2) = z.transpose();
  c.t = -c.R * eye;
  c.fx = c.fy = f;
  c.cx = (width - 1) / 2.0;
  c.cy = (height - 1) / 2.0;
  c.width = width;
  c.height = height;
  return c;
}

namespace ad {

/// World points (N x 3) -> N x 4 rows [x_px, y_px, z, r_px] with
/// r_px = radius * fx / z. Points with z <= near plane get r_px = 0 (culled)
/// and no gradient.
inline Var project(Var points, const Camera& cam, double radius) {
  const Tensor& P = points.value();
  if (P.cols() != 3) throw ShapeError("project: points must be N x 3, got " + P.shape_str());
  const std::size_t n = P.rows();
  Tensor out(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d c = cam.to_camera(Eigen::Vector3d(P(i, 0), P(i, 1), P(i, 2)));
    out(i, 2) = c.z();
    if (c.z() <= kNearPlane) continue;
    out(i, 0) = cam.fx * c.x() / c.z() + cam.cx;
    out(i, 1) = cam.fy * c.y() / c.z() + cam.cy;
    out(i, 3) = radius * cam.fx / c.z();
  }
  const Tensor* pp = &P;
  return points.tape->record("project", std::move(out), {points},
                             [pp, cam, radius](const Tensor& g, std::span<Tensor* const> gi) {
                               const std::size_t n = pp->rows();
                               for (std::size_t i = 0; i < n; ++i) {
                                 const Eigen::Vector3d c =
                                     cam.to_camera(Eigen::Vector3d((*pp)(i, 0), (*pp)(i, 1), (*pp)(i, 2)));
                                 Eigen::Vector3d dc(0, 0, g(i, 2));
                                 if (c.z() > kNearPlane) {
                                   const double iz = 1.0 / c.z();
                                   dc.x() += g(i, 0) * cam.fx * iz;
                                   dc.y() += g(i, 1) * cam.fy * iz;
                                   dc.z() -= (g(i, 0) * cam.fx * c.x() + g(i, 1) * cam.fy * c.y() +
                                              g(i, 3) * radius * cam.fx) *
                                             iz * iz;
                                 }
                                 const Eigen::Vector3d dp = cam.R.transpose() * dc;
                                 for (std::size_t k = 0; k < 3; ++k) (*gi[0])(i, k) += dp[static_cast<Eigen::Index>(k)];
                               }
                             });
}

}  // namespace ad

}  // namespace handsplat
