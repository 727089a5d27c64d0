#pragma once

// Relit renders of a trained model. Shading is per point: the learned color is
// the Phong base, normals are the renormalized deformed SDF normals, and the
// approximate mesh supplies shadow rays and a fallback where the SDF gradient
// vanishes.

#include "handsplat/model.hpp"
#include "handsplat/relight.hpp"

namespace handsplat {

struct RelightOptions {
  PhongLight light;
  bool shadows = true;
};

/// Per-point shadow term: the shadow of the approximate-mesh vertex each point
/// is bound to.
inline std::vector<std::uint8_t> point_shadows(const HandModel& m, const ApproximateMesh& mesh, const PhongLight& light) {
  const std::vector<std::uint8_t> vs = self_shadow(mesh, light);
  std::vector<std::uint8_t> out(m.points.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vs[m.points.binding.nearest[i]];
  return out;
}

inline HandModel::Image relight_image(HandModel& m, const PoseParams& pose, const Camera& cam, const RelightOptions& opt) {
  opt.light.validate();
  ad::Tape tape;
  ad::Var coords = tape.constant(m.points.coords.value);
  const NormalDeformation d = m.normal_deformation(m.canonical_normals(), pose);
  const RowMatrix base = m.point_colors(tape, m.albedo_colors(tape, coords), d).value().mat();

  const ApproximateMesh mesh = approximate_mesh(m.points, m.rig, pose);
  std::vector<std::uint8_t> degenerate;
  RowMatrix n = HandModel::unit_normals(d.points, &degenerate);
  for (std::size_t i = 0; i < degenerate.size(); ++i)
    if (degenerate[i]) n.row(static_cast<Eigen::Index>(i)) = mesh.normals.row(static_cast<Eigen::Index>(m.points.binding.nearest[i]));

  const Eigen::Vector3d view = (cam.position() - mesh.vertices.colwise().mean().transpose()).normalized();
  std::vector<std::uint8_t> shadow;
  if (opt.shadows) shadow = point_shadows(m, mesh, opt.light);
  const RowMatrix lit = phong_shade(n, opt.light, view, base, opt.shadows ? &shadow : nullptr);

  const HandModel::Frame f = m.render(tape, coords, tape.constant(Tensor::from_matrix(lit)), pose, cam);
  return {f.rgb.value(), f.alpha.value()};
}

/// Light direction swept horizontally: azimuth `deg` degrees about the world y
/// axis from `base`.
inline Eigen::Vector3d swept_light(const Eigen::Vector3d& base, double deg) {
  return (Eigen::AngleAxisd(deg * M_PI / 180.0, Eigen::Vector3d::UnitY()) * base).normalized();
}

}  // namespace handsplat
