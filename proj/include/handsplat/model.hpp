#pragma once

// The hand model: canonical points, SDF, albedo and shading modules, and the
// per-frame forward pass deform -> color -> project -> splat.

#include "handsplat/appearance.hpp"
#include "handsplat/canonical.hpp"
#include "handsplat/checkpoint.hpp"
#include "handsplat/mesh_distance.hpp"
#include "handsplat/renderer.hpp"
#include "handsplat/rig_io.hpp"
#include "handsplat/sdf.hpp"

#include <memory>

namespace handsplat {

struct ModelConfig {
  SdfConfig sdf;
  AttentionConfig albedo;
  AttentionConfig shading;
  bool use_shading = true;  // false: color = albedo
};

/// Normalization of the SDF and albedo inputs to the template's bounding box.
inline ModelConfig default_model_config(const TemplateRig& rig) {
  ModelConfig c;
  const Eigen::RowVector3d lo = rig.vertices.colwise().minCoeff(), hi = rig.vertices.colwise().maxCoeff();
  const double half = 0.5 * (hi - lo).maxCoeff();
  c.sdf.center = (0.5 * (lo + hi)).transpose();
  c.sdf.scale = 0.5 * half;  // thin fingers fit faster at a finer input scale
  c.albedo.input_center = 0.5 * (lo + hi);
  c.albedo.input_scale = 1.0 / half;
  c.albedo.seed = 11;
  c.shading.seed = 12;
  return c;
}

/// Shading inputs for one pose: deformed canonical normals and deformed
/// template normals.
struct NormalDeformation {
  RowMatrix points;    // D_C, N_C x 3
  RowMatrix template_; // D_M, N_M x 3
};

class HandModel {
 public:
  HandModel(TemplateRig r, const ModelConfig& c)
      : rig(std::move(r)),
        config(c),
        points(CanonicalPointSet::from_template(rig)),
        sdf(c.sdf),
        albedo("albedo", ContextAttentionModule::Kind::Albedo, c.albedo),
        shading("shading", ContextAttentionModule::Kind::Shading, c.shading),
        template_normals(handsplat::template_normals(rig)) {}

  explicit HandModel(TemplateRig r) : HandModel(r, default_model_config(r)) {}

  // Optimizer state is keyed by parameter address.
  HandModel(const HandModel&) = delete;
  HandModel& operator=(const HandModel&) = delete;

  TemplateRig rig;
  ModelConfig config;
  CanonicalPointSet points;
  SdfNetwork sdf;
  ContextAttentionModule albedo;
  ContextAttentionModule shading;
  RowMatrix template_normals;  // n_M

  std::vector<ad::Parameter*> geometry_parameters() {
    auto p = sdf.parameters();
    p.insert(p.begin(), &points.coords);
    return p;
  }
  std::vector<ad::Parameter*> appearance_parameters() {
    auto p = albedo.parameters();
    for (auto* q : shading.parameters()) p.push_back(q);
    return p;
  }
  std::vector<ad::Parameter*> parameters() {
    auto p = geometry_parameters();
    for (auto* q : appearance_parameters()) p.push_back(q);
    return p;
  }

  /// Albedo of every canonical point; queries are `coords`, keys the template.
  ad::Var albedo_colors(ad::Tape& tape, ad::Var coords) {
    return albedo.forward(tape, coords, tape.constant(Tensor::from_matrix(rig.vertices)));
  }

  /// Unit SDF normals n_C from a gradient; rows with a vanishing gradient are
  /// zero and flagged.
  static RowMatrix unit_normals(const RowMatrix& gradient, std::vector<std::uint8_t>* degenerate = nullptr) {
    RowMatrix n = gradient;
    if (degenerate) degenerate->assign(static_cast<std::size_t>(n.rows()), 0);
    for (Eigen::Index i = 0; i < n.rows(); ++i) {
      const double len = n.row(i).norm();
      if (len < 1e-8) {
        n.row(i).setZero();
        if (degenerate) (*degenerate)[static_cast<std::size_t>(i)] = 1;
      } else {
        n.row(i) /= len;
      }
    }
    return n;
  }

  RowMatrix canonical_normals() { return unit_normals(sdf.gradients(points.positions())); }

  /// D_C = n_C J_C^-1 and D_M = n_M J_M^-1 under `pose`.
  NormalDeformation normal_deformation(const RowMatrix& n_c, const PoseParams& pose) const {
    const BoneTransforms T = forward_kinematics(rig, pose);
    return {deform_normals(n_c, jacobian_inverses(points.binding.weights, T).inv),
            deform_normals(template_normals, jacobian_inverses(rig.weights, T).inv)};
  }

  /// Scalar shading per point (N_C x 1). The normal features are constants.
  ad::Var shading_values(ad::Tape& tape, const NormalDeformation& d) {
    return shading.forward(tape, tape.constant(Tensor::from_matrix(d.points)),
                           tape.constant(Tensor::from_matrix(d.template_)));
  }

  ad::Var point_colors(ad::Tape& tape, ad::Var albedo_c, const NormalDeformation& d) {
    if (!config.use_shading) return albedo_c;
    return compose_color(albedo_c, shading_values(tape, d));
  }

  ad::Var posed_points(ad::Tape& tape, ad::Var coords, const PoseParams& pose) const {
    detail::check_pose(rig, pose);
    Tensor phi(static_cast<std::size_t>(pose.phi.size()), 1);
    for (Eigen::Index i = 0; i < pose.phi.size(); ++i) phi[static_cast<std::size_t>(i)] = pose.phi(i);
    return ad::deform_points(rig, points.binding, coords, tape.constant(Tensor::from_matrix(pose.theta)),
                             tape.constant(std::move(phi)), pose.global());
  }

  struct Frame {
    ad::Var rgb;        // (H W) x 3
    ad::Var alpha;      // (H W) x 1
    ad::Var projected;  // N_C x 4
  };

  Frame render(ad::Tape& tape, ad::Var coords, ad::Var colors, const PoseParams& pose, const Camera& cam) const {
    cam.validate();
    ad::Var proj = ad::project(posed_points(tape, coords, pose), cam, points.radius);
    ad::Var img = ad::splat_render(proj, colors, cam.width, cam.height);
    return {ad::slice_cols(img, 0, 3), ad::slice_cols(img, 3, 4), proj};
  }

  struct Image {
    Tensor rgb, alpha;
  };

  /// Inference render of one frame.
  Image render_image(const PoseParams& pose, const Camera& cam) {
    ad::Tape tape;
    ad::Var coords = tape.constant(points.coords.value);
    ad::Var colors = point_colors(tape, albedo_colors(tape, coords), normal_deformation(canonical_normals(), pose));
    const Frame f = render(tape, coords, colors, pose, cam);
    return {f.rgb.value(), f.alpha.value()};
  }

  /// Albedo of the current points, no tape kept.
  RowMatrix albedo_values() {
    ad::Tape tape;
    return albedo_colors(tape, tape.constant(points.coords.value)).value().mat();
  }
};

/// Splats of a projected N x 4 tensor (colors left at zero).
inline Splats<double> splats_of(const Tensor& projected) {
  Splats<double> s;
  s.resize(projected.rows());
  for (std::size_t i = 0; i < projected.rows(); ++i) {
    s.x[i] = projected(i, 0);
    s.y[i] = projected(i, 1);
    s.z[i] = projected(i, 2);
    s.r[i] = projected(i, 3);
  }
  return s;
}

/// Posed template silhouette dilated by `dilation` pixels.
inline std::vector<std::uint8_t> template_silhouette(const TemplateRig& rig, const PoseParams& pose, const Camera& cam,
                                                     double dilation = 2.0) {
  const RowMatrix posed =
      deform_points(rig, bind_canonical_points(rig, rig.vertices), forward_kinematics(rig, pose), pose, rig.vertices);
  return dilate(mesh_silhouette(posed, rig.faces, cam), cam.width, cam.height, dilation);
}

struct SdfWarmStartConfig {
  std::size_t steps = 1000;
  std::size_t batch = 512;
  double lr = 1e-3;
  double eikonal_weight = 0.01;  // the targets are true distances already
  std::vector<double> offsets{-0.003, -0.0015, 0.0, 0.0015, 0.003, 0.006, 0.012};  // meters along n_M
};

/// Samples along the template normals, labelled with their signed distance
/// to the template mesh.
inline std::pair<RowMatrix, Eigen::VectorXd> template_sdf_samples(const TemplateRig& rig, const RowMatrix& normals,
                                                                  const std::vector<double>& offsets) {
  const Eigen::Index N = rig.vertices.rows();
  const auto K = static_cast<Eigen::Index>(offsets.size());
  RowMatrix x(N * K, 3);
  for (Eigen::Index k = 0; k < K; ++k)
    x.middleRows(k * N, N) = rig.vertices + offsets[static_cast<std::size_t>(k)] * normals;
  return {x, mesh_signed_distance(rig.vertices, rig.faces, x)};
}

/// Fits the SDF to the template's signed distance so training starts from the
/// template surface rather than the initial sphere.
inline double warm_start_sdf(HandModel& m, const SdfWarmStartConfig& cfg = {}) {
  if (cfg.steps == 0) return 0.0;
  const auto [x, y] = template_sdf_samples(m.rig, m.template_normals, cfg.offsets);
  SdfFitConfig fit;
  fit.steps = cfg.steps;
  fit.batch = cfg.batch;
  fit.lr = cfg.lr;
  fit.eikonal_weight = cfg.eikonal_weight;
  return fit_sdf(m.sdf, x, y, fit);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline Tensor row_tensor(std::initializer_list<double> v) {
  Tensor t(1, v.size());
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

inline Tensor attention_config_tensor(const AttentionConfig& c) {
  return row_tensor({static_cast<double>(c.hidden), static_cast<double>(c.d_cross), c.input_center(0),
                     c.input_center(1), c.input_center(2), c.input_scale, static_cast<double>(c.seed)});
}

inline AttentionConfig attention_config_from(const Tensor& t) {
  if (t.size() != 7) throw std::runtime_error("checkpoint: malformed attention config");
  AttentionConfig c;
  c.hidden = static_cast<std::size_t>(t[0]);
  c.d_cross = static_cast<std::size_t>(t[1]);
  c.input_center << t[2], t[3], t[4];
  c.input_scale = t[5];
  c.seed = static_cast<std::uint64_t>(t[6]);
  return c;
}

}  // namespace detail

inline TensorMap model_to_container(HandModel& m) {
  TensorMap out;
  for (auto& [k, v] : rig_to_container(m.rig)) out.emplace("rig." + k, v);
  const auto& s = m.config.sdf;
  out["config.sdf"] = detail::row_tensor({static_cast<double>(s.layers), static_cast<double>(s.width), s.beta,
                                          s.center.x(), s.center.y(), s.center.z(), s.scale, s.init_radius,
                                          static_cast<double>(s.seed)});
  out["config.albedo"] = detail::attention_config_tensor(m.config.albedo);
  out["config.shading"] = detail::attention_config_tensor(m.config.shading);
  out["config.use_shading"] = detail::row_tensor({m.config.use_shading ? 1.0 : 0.0});
  const auto& p = m.points;
  out["points.meta"] = detail::row_tensor({p.radius0, p.radius, static_cast<double>(p.generation)});
  Tensor gen(p.size(), 1), vis(p.size(), 1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    gen[i] = p.point_generation[i];
    vis[i] = p.visible[i];
  }
  out["points.generation"] = std::move(gen);
  out["points.visible"] = std::move(vis);
  for (auto* q : m.parameters()) out[q->name] = q->value;
  return out;
}

inline std::unique_ptr<HandModel> model_from_container(const TensorMap& c) {
  TensorMap rig_part;
  for (const auto& [k, v] : c)
    if (k.rfind("rig.", 0) == 0) rig_part.emplace(k.substr(4), v);
  ModelConfig cfg;
  const Tensor& s = require(c, "config.sdf");
  if (s.size() != 9) throw std::runtime_error("checkpoint: malformed sdf config");
  cfg.sdf.layers = static_cast<std::size_t>(s[0]);
  cfg.sdf.width = static_cast<std::size_t>(s[1]);
  cfg.sdf.beta = s[2];
  cfg.sdf.center << s[3], s[4], s[5];
  cfg.sdf.scale = s[6];
  cfg.sdf.init_radius = s[7];
  cfg.sdf.seed = static_cast<std::uint64_t>(s[8]);
  cfg.albedo = detail::attention_config_from(require(c, "config.albedo"));
  cfg.shading = detail::attention_config_from(require(c, "config.shading"));
  cfg.use_shading = require(c, "config.use_shading")[0] != 0.0;
  auto m = std::make_unique<HandModel>(rig_from_container(rig_part), cfg);
  auto& p = m->points;
  const Tensor& meta = require(c, "points.meta");
  if (meta.size() != 3) throw std::runtime_error("checkpoint: malformed points.meta");
  p.radius0 = meta[0];
  p.radius = meta[1];
  p.generation = static_cast<int>(meta[2]);
  for (auto* q : m->parameters()) {
    const Tensor& v = require(c, q->name);
    if (q != &p.coords && v.shape() != q->value.shape())
      throw std::runtime_error(fmt::format("checkpoint: {} has shape {}, expected {}", q->name, v.shape_str(),
                                           q->value.shape_str()));
    q->value = v;
    q->zero_grad();
  }
  if (p.coords.value.cols() != 3 || p.coords.value.rows() == 0)
    throw std::runtime_error("checkpoint: points.coords must be N x 3");
  const Tensor& gen = require(c, "points.generation");
  const Tensor& vis = require(c, "points.visible");
  if (gen.size() != p.size() || vis.size() != p.size())
    throw std::runtime_error("checkpoint: per-point records disagree with points.coords");
  p.point_generation.resize(p.size());
  p.visible.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p.point_generation[i] = static_cast<int>(gen[i]);
    p.visible[i] = vis[i] != 0.0;
  }
  p.rebind(m->rig);
  return m;
}

inline void save_model(const std::string& path, HandModel& m) { save_container(path, model_to_container(m)); }
inline std::unique_ptr<HandModel> load_model(const std::string& path) { return model_from_container(load_container(path)); }

}  // namespace handsplat
