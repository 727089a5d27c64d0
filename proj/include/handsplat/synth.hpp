#pragma once

// Synthetic multi-view fixtures: the toy rig with a procedural albedo, lit by
// a fixed diffuse light, posed randomly and rendered with the splat renderer
// at generation 0 (template vertices, initial radius).

#include "handsplat/canonical.hpp"
#include "handsplat/io/files.hpp"
#include "handsplat/relight.hpp"
#include "handsplat/renderer.hpp"
#include "handsplat/rig_io.hpp"
#include "handsplat/toy_rig.hpp"

#include <filesystem>

namespace handsplat {

struct SynthConfig {
  ToyRigConfig rig;
  int n_frames = 20;
  int n_views = 4;
  int width = 128, height = 128;
  std::uint64_t seed = 1;
  double distance = 0.4;        // camera to look-at point, meters
  double focal_per_width = 1.55;  // fx = focal_per_width * width
  double max_flexion = 0.7;     // radians per finger joint
  double max_global = 0.25;     // radians per axis of the global rotation
  int val_view = -1;            // view tagged "val"; -1 = n_views / 2
  PhongLight light = default_light();

  static PhongLight default_light() {
    PhongLight l;
    l.direction = Eigen::Vector3d(0.3, 0.5, -0.8).normalized();
    l.ka = 0.35;
    l.kd = 0.65;
    l.ks = 0.0;  // view-independent, like the learned shading
    return l;
  }
};

/// Smooth per-vertex color pattern over the rest template.
inline RowMatrix procedural_albedo(const TemplateRig& rig) {
  RowMatrix c(rig.vertices.rows(), 3);
  for (Eigen::Index v = 0; v < c.rows(); ++v) {
    const double x = rig.vertices(v, 0), y = rig.vertices(v, 1), z = rig.vertices(v, 2);
    c(v, 0) = 0.60 + 0.22 * std::sin(35.0 * x + 12.0 * z + 0.4);
    c(v, 1) = 0.45 + 0.20 * std::sin(28.0 * y + 1.1);
    c(v, 2) = 0.35 + 0.18 * std::cos(30.0 * (x + y) - 0.7);
  }
  return c;
}

/// Random flexion of every finger joint toward +z, slight abduction, and a
/// small global rotation. Assumes the toy-rig joint layout.
inline PoseParams sample_pose(const TemplateRig& rig, const SynthConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0), u(-1.0, 1.0);
  PoseParams p = PoseParams::zero(rig.num_joints(), rig.num_shape());
  const int F = cfg.rig.fingers, S = cfg.rig.segments_per_finger;
  for (int f = 0; f < F; ++f) {
    const Eigen::Vector3d dir = detail::finger_spec(f).dir;
    const Eigen::Vector3d bend = dir.cross(Eigen::Vector3d::UnitZ()).normalized();
    const double scale = f == 4 ? 0.5 : 1.0;
    for (int s = 0; s < S; ++s) {
      Eigen::Vector3d w = bend * (cfg.max_flexion * scale * u01(rng));
      if (s == 0) w += Eigen::Vector3d::UnitZ() * (0.1 * u(rng));
      p.theta.row(1 + f * S + s) = w.transpose();
    }
  }
  for (Eigen::Index i = 0; i < p.phi.size(); ++i) p.phi(i) = u(rng);
  p.global_rotation = ad::rodrigues(Eigen::Vector3d(u(rng), u(rng), u(rng)) * cfg.max_global);
  return p;
}

/// Views spread over azimuth in front of the palm (the -z side), alternating
/// elevation.
inline Camera synth_camera(const SynthConfig& cfg, int view) {
  const Eigen::Vector3d target(0.0, 0.08, 0.0);
  const double span = 90.0 * M_PI / 180.0;
  const double az = cfg.n_views == 1 ? 0.0 : -span / 2 + span * view / (cfg.n_views - 1);
  const double el = (view % 2 == 0 ? 1.0 : -1.0) * 12.0 * M_PI / 180.0;
  const Eigen::Vector3d dir(std::sin(az) * std::cos(el), std::sin(el), -std::cos(az) * std::cos(el));
  return look_at(target + cfg.distance * dir, target, Eigen::Vector3d::UnitY(), cfg.focal_per_width * cfg.width,
                 cfg.width, cfg.height);
}

struct SynthFrame {
  Tensor rgb;    // (H W) x 3
  Tensor alpha;  // (H W) x 1
  Tensor mask;   // alpha > 0.5
};

/// Generation-0 render of the template under `pose` with per-vertex Phong
/// colors from posed template normals.
inline SynthFrame render_template_frame(const TemplateRig& rig, const RowMatrix& albedo, const PoseParams& pose,
                                        const Camera& cam, const PhongLight& light, double radius) {
  const PerPointRigData bind = bind_canonical_points(rig, rig.vertices);
  const BoneTransforms T = forward_kinematics(rig, pose);
  const RowMatrix posed = deform_points(rig, bind, T, pose, rig.vertices);
  RowMatrix n = deform_normals(template_normals(rig), jacobian_inverses(rig.weights, T).inv);
  n.rowwise().normalize();
  const Eigen::Vector3d view = -cam.R.row(2).transpose();
  const RowMatrix colors = phong_shade(n, light, view, albedo);
  const auto target = rasterize(project_points(posed, colors, cam, radius), cam.width, cam.height);
  SynthFrame f;
  const std::size_t P = target.alpha.size();
  f.rgb = Tensor(P, 3);
  std::copy(target.rgb.begin(), target.rgb.end(), f.rgb.data());
  f.alpha = Tensor(P, 1);
  f.mask = Tensor(P, 1);
  for (std::size_t p = 0; p < P; ++p) {
    f.alpha[p] = target.alpha[p];
    f.mask[p] = target.alpha[p] > 0.5 ? 1.0 : 0.0;
  }
  return f;
}

/// The dataset in memory, pose-major. Frames of one pose share `pose_key`.
inline std::vector<FrameSample> synthesize_frames(const SynthConfig& cfg) {
  if (cfg.n_frames < 1 || cfg.n_views < 1) throw std::invalid_argument("synth: need at least one frame and view");
  const TemplateRig rig = build_toy_rig(cfg.rig);
  const RowMatrix albedo = procedural_albedo(rig);
  const double radius = median_nn_distance(rig.vertices);
  const int val_view = cfg.val_view >= 0 ? cfg.val_view : cfg.n_views / 2;
  std::mt19937_64 rng(cfg.seed);
  std::vector<FrameSample> out;
  for (int f = 0; f < cfg.n_frames; ++f) {
    const PoseParams pose = sample_pose(rig, cfg, rng);
    for (int v = 0; v < cfg.n_views; ++v) {
      FrameSample s;
      s.camera = synth_camera(cfg, v);
      s.pose = pose;
      const SynthFrame fr = render_template_frame(rig, albedo, pose, s.camera, cfg.light, radius);
      s.rgb = fr.rgb;
      s.mask = fr.mask;
      s.pose_key = fmt::format("frame_{:03d}", f);
      s.name = fmt::format("frame_{:03d}_view_{:02d}", f, v);
      s.split = v == val_view && cfg.n_views > 1 ? "val" : "train";
      out.push_back(std::move(s));
    }
  }
  return out;
}

/// Writes images, masks, cameras, poses, the rig (rig.hsrig) and
/// manifest.json under `out_dir`; returns the manifest path. Frames are
/// ordered pose-major.
inline std::string generate_synthetic_dataset(const std::string& out_dir, const SynthConfig& cfg) {
  namespace fs = std::filesystem;
  const std::vector<FrameSample> frames = synthesize_frames(cfg);
  for (const char* d : {"images", "masks", "cameras", "poses"}) fs::create_directories(fs::path(out_dir) / d);
  io::DatasetManifest manifest;
  for (int v = 0; v < cfg.n_views; ++v)
    io::save_camera((fs::path(out_dir) / "cameras" / fmt::format("view_{:02d}.json", v)).string(), synth_camera(cfg, v));
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const int f = static_cast<int>(k) / cfg.n_views, v = static_cast<int>(k) % cfg.n_views;
    const FrameSample& s = frames[k];
    const std::string pose_file = fmt::format("poses/frame_{:03d}.json", f);
    if (v == 0) io::save_pose((fs::path(out_dir) / pose_file).string(), s.pose);
    io::FrameRecord rec;
    rec.image = fmt::format("images/{}.png", s.name);
    rec.mask = fmt::format("masks/{}.png", s.name);
    rec.camera = fmt::format("cameras/view_{:02d}.json", v);
    rec.pose = pose_file;
    rec.split = s.split;
    io::save_png((fs::path(out_dir) / rec.image).string(), s.rgb, cfg.width, cfg.height);
    io::save_png((fs::path(out_dir) / rec.mask).string(), s.mask, cfg.width, cfg.height);
    manifest.frames.push_back(std::move(rec));
  }
  save_rig((fs::path(out_dir) / "rig.hsrig").string(), build_toy_rig(cfg.rig));
  const std::string path = (fs::path(out_dir) / "manifest.json").string();
  io::save_manifest(path, manifest);
  return path;
}

}  // namespace handsplat
