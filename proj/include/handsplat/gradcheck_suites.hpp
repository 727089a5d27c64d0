#pragma once

// Finite-difference suites over the whole differentiable pipeline, shared by
// the tests, the acceptance binary and `handsplat gradcheck`.

#include "handsplat/appearance.hpp"
#include "handsplat/camera.hpp"
#include "handsplat/geom_ops.hpp"
#include "handsplat/gradcheck.hpp"
#include "handsplat/losses.hpp"
#include "handsplat/renderer.hpp"
#include "handsplat/sdf.hpp"
#include "handsplat/toy_rig.hpp"

namespace handsplat {

struct SuiteResult {
  std::string name;
  double max_error = 0.0;
  double threshold = 1e-4;
  std::size_t checks = 0;  // individual finite-difference comparisons
  bool passed() const { return max_error < threshold; }
};

namespace suites {

inline Tensor uniform(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (double& v : t.values()) v = u(rng);
  return t;
}

class Accumulator {
 public:
  Accumulator(std::string name, double threshold) {
    r_.name = std::move(name);
    r_.threshold = threshold;
  }
  void add(const ad::GradCheckResult& g) {
    r_.max_error = std::max(r_.max_error, g.max_rel_error);
    r_.checks += g.checked;
  }
  SuiteResult result() const { return r_; }

 private:
  SuiteResult r_;
};

/// Every autodiff primitive, scalarized by a random weighted sum, over
/// `trials` random inputs.
inline SuiteResult primitives(int trials = 20) {
  using namespace ad;
  Accumulator acc("primitives", 1e-4);
  std::mt19937_64 rng(42);
  auto run = [&](const std::function<Var(Tape&, Var)>& op, std::size_t r, std::size_t c, double lo = -2.0,
                 double hi = 2.0) {
    for (int t = 0; t < trials; ++t) {
      const Tensor x = uniform(rng, r, c, lo, hi);
      Tensor w;
      auto f = [&](Tape& tape, Var xv) {
        Var out = op(tape, xv);
        if (w.empty()) w = uniform(rng, out.rows(), out.cols());
        return sum(mul(out, tape.constant(w)));
      };
      acc.add(finite_difference_check(f, x, 1e-4));
    }
  };
  const Tensor other = uniform(rng, 3, 4), row = uniform(rng, 1, 4), col = uniform(rng, 3, 1);
  const Tensor rhs = uniform(rng, 4, 2), positive = uniform(rng, 3, 4, 0.5, 2.0);
  const Tensor pts = uniform(rng, 5, 3), mats = uniform(rng, 5, 9);

  run([](Tape&, Var x) { return softplus(x); }, 3, 4);
  run([](Tape&, Var x) { return softplus(x, 10.0); }, 3, 4);
  run([](Tape&, Var x) { return relu(x); }, 3, 4);
  run([](Tape&, Var x) { return sigmoid(x); }, 3, 4);
  run([](Tape&, Var x) { return ad::tanh(x); }, 3, 4);
  run([](Tape&, Var x) { return ad::abs(x); }, 3, 4);
  run([](Tape&, Var x) { return square(x); }, 3, 4);
  run([](Tape&, Var x) { return scale(x, -1.7); }, 3, 4);
  run([](Tape&, Var x) { return add_scalar(x, 0.3); }, 3, 4);
  run([](Tape&, Var x) { return softmax_rows(x); }, 3, 4);
  run([](Tape&, Var x) { return sum(x); }, 3, 4);
  run([](Tape&, Var x) { return mean(x); }, 3, 4);
  run([](Tape&, Var x) { return l2norm_rows(x); }, 3, 4);
  run([](Tape&, Var x) { return transpose(x); }, 3, 4);
  run([](Tape&, Var x) { return reshape(x, {2, 6}); }, 3, 4);
  run([](Tape&, Var x) { return slice_cols(x, 1, 3); }, 3, 4);
  run([](Tape&, Var x) { return gather_rows(x, {2, 0, 2, 1}); }, 3, 4);
  run([](Tape&, Var x) { return concat({x, square(x)}, 0); }, 3, 4);
  run([](Tape&, Var x) { return concat({x, x}, 1); }, 3, 4);
  for (const Tensor* b : {&other, &row, &col}) {
    run([&](Tape& t, Var x) { return add(x, t.constant(*b)); }, 3, 4);
    run([&](Tape& t, Var x) { return mul(x, t.constant(*b)); }, 3, 4);
  }
  run([&](Tape& t, Var x) { return sub(t.constant(other), x); }, 3, 4);
  run([&](Tape& t, Var x) { return mul(t.constant(other), x); }, 1, 4);
  run([&](Tape& t, Var x) { return add(t.constant(other), x); }, 3, 1);
  run([&](Tape& t, Var x) { return div(x, t.constant(positive)); }, 3, 4);
  run([&](Tape& t, Var x) { return div(t.constant(other), x); }, 3, 4, 0.5, 2.0);
  run([&](Tape& t, Var x) { return matmul(x, t.constant(rhs)); }, 3, 4);
  run([&](Tape& t, Var x) { return matmul(t.constant(other), x); }, 4, 2);
  run([](Tape&, Var x) { return rodrigues(x); }, 4, 3);
  run([](Tape&, Var x) { return rodrigues(x); }, 4, 3, -1e-3, 1e-3);
  run([&](Tape& t, Var x) { return rowwise_affine(x, t.constant(pts)); }, 5, 12);
  run([&](Tape& t, Var x) { return rowwise_affine(t.constant(Tensor(5, 12, 0.5)), x); }, 5, 3);
  run([&](Tape& t, Var x) { return rowvec_mat(x, t.constant(mats)); }, 5, 3);
  run([&](Tape& t, Var x) { return rowvec_mat(t.constant(pts), x); }, 5, 9);
  run([](Tape&, Var x) { return normalize_rows(x); }, 5, 3);
  run([](Tape&, Var x) { return cross_attention(slice_cols(x, 0, 2), slice_cols(x, 2, 4), slice_cols(x, 4, 7)); }, 5,
      7);
  return acc.result();
}

/// Deformation of perturbed template points on the small toy rig w.r.t. theta,
/// phi and the canonical coordinates.
inline SuiteResult deformation() {
  Accumulator acc("deformation", 1e-4);
  const TemplateRig rig = build_toy_rig(small_toy_rig_config());
  std::mt19937_64 rng(22);
  const std::size_t n = 24;
  RowMatrix p(static_cast<Eigen::Index>(n), 3);
  std::uniform_int_distribution<Eigen::Index> pick(0, rig.vertices.rows() - 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    p.row(i) = rig.vertices.row(pick(rng)) + 0.003 * Eigen::RowVector3d(u(rng), u(rng), u(rng));
  const PerPointRigData d = bind_canonical_points(rig, p);
  PoseParams pose = PoseParams::zero(rig.num_joints(), rig.num_shape());
  for (double& v : pose.theta.reshaped()) v = 0.6 * u(rng);
  for (double& v : pose.phi) v = u(rng);
  pose.global_rotation = ad::rodrigues(Eigen::Vector3d(0.1, -0.2, 0.3));
  pose.global_translation = Eigen::Vector3d(0.01, 0.02, -0.03);
  const Tensor w = uniform(rng, n, 3, -1.0, 1.0);
  const Tensor P = Tensor::from_matrix(p), Th = Tensor::from_matrix(pose.theta), Ph = Tensor::from_matrix(pose.phi);
  auto loss = [&](ad::Tape& t, ad::Var c, ad::Var th, ad::Var ph) {
    return ad::sum(ad::mul(ad::deform_points(rig, d, c, th, ph, pose.global()), t.constant(w)));
  };
  acc.add(ad::finite_difference_check([&](ad::Tape& t, ad::Var x) { return loss(t, t.constant(P), x, t.constant(Ph)); },
                                      Th));
  acc.add(ad::finite_difference_check([&](ad::Tape& t, ad::Var x) { return loss(t, t.constant(P), t.constant(Th), x); },
                                      Ph));
  acc.add(ad::finite_difference_check([&](ad::Tape& t, ad::Var x) { return loss(t, x, t.constant(Th), t.constant(Ph)); },
                                      P));
  return acc.result();
}

/// SDF regularization (surface + eikonal) w.r.t. the network parameters and
/// the canonical points.
inline SuiteResult regularization() {
  Accumulator acc("regularization", 1e-4);
  SdfConfig cfg;
  cfg.layers = 2;
  cfg.width = 12;
  cfg.beta = 8.0;
  cfg.init_radius = 0.7;
  SdfNetwork net(cfg);
  std::mt19937_64 rng(7);
  const Tensor p = uniform(rng, 10, 3, -1.0, 1.0);
  const Tensor omega = uniform(rng, 10, 3, -1.0, 1.0);
  auto loss = [&](ad::Tape& tape, ad::Var coords) {
    const auto r = regularization_loss(net, tape, coords, omega);
    return ad::add(r.sdf_mean, ad::scale(r.eik_mean, 0.1));
  };
  acc.add(ad::finite_difference_check(loss, p));
  for (ad::Parameter* prm : net.parameters())
    acc.add(ad::finite_difference_check([&](ad::Tape& t) { return loss(t, t.constant(p)); }, *prm));
  return acc.result();
}

/// Point positions and colors from the appearance modules, rendered at 8x8 and
/// scored by the image losses; checked w.r.t. positions, colors and every
/// appearance parameter.
inline SuiteResult render(int scenes = 3) {
  Accumulator acc("render", 1e-3);
  const int W = 8, H = 8;
  const std::size_t n = 20;
  const PerceptualExtractor vgg;
  for (int s = 0; s < scenes; ++s) {
    std::mt19937_64 rng(100 + s);
    std::uniform_real_distribution<double> u(-1.0, 1.0), u01(0.0, 1.0);
    const Camera cam = look_at({0.02, -0.01, -0.5}, {0, 0, 0}, {0, -1, 0}, 60, W, H);
    const double radius = 0.012;
    Tensor pts(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      pts(i, 0) = 0.03 * u(rng);
      pts(i, 1) = 0.03 * u(rng);
      pts(i, 2) = 0.05 * u(rng);
    }
    Tensor target(W * H, 3), mask(W * H, 1);
    for (double& v : target.values()) v = u01(rng);
    for (double& v : mask.values()) v = u01(rng) < 0.5 ? 1.0 : 0.0;
    const auto target_features = vgg.target_features(target, H, W);

    AttentionConfig ac;
    ac.hidden = 8;
    ac.d_cross = 4;
    ac.input_scale = 20.0;
    ContextAttentionModule albedo("albedo", ContextAttentionModule::Kind::Albedo, ac);
    ac.seed = 12;
    ac.input_scale = 1.0;
    ContextAttentionModule shading("shading", ContextAttentionModule::Kind::Shading, ac);
    const Tensor keys = uniform(rng, 6, 3, -0.03, 0.03);
    const Tensor d_c = uniform(rng, n, 3, -1.0, 1.0), d_m = uniform(rng, 6, 3, -1.0, 1.0);

    auto image_loss = [&](ad::Var points, ad::Var colors) {
      const ad::Var img = ad::splat_render(ad::project(points, cam, radius), colors, W, H);
      const ad::Var rgb = ad::slice_cols(img, 0, 3), alpha = ad::slice_cols(img, 3, 4);
      return ad::add(ad::add(rgb_loss(rgb, target, mask, false), ad::scale(vgg.loss(rgb, target_features, H, W), 0.1)),
                     mask_loss(alpha, mask));
    };
    auto colors_of = [&](ad::Tape& t, ad::Var points) {
      return compose_color(albedo.forward(t, points, t.constant(keys)),
                           shading.forward(t, t.constant(d_c), t.constant(d_m)));
    };
    Tensor colors;
    {
      ad::Tape t;
      colors = colors_of(t, t.constant(pts)).value();
    }
    // Positions move splats across pixel centers; a small step keeps the
    // difference inside one coverage configuration.
    acc.add(ad::finite_difference_check(
        [&](ad::Tape& t, ad::Var x) { return image_loss(x, t.constant(colors)); }, pts, 1e-6));
    acc.add(ad::finite_difference_check(
        [&](ad::Tape& t, ad::Var x) { return image_loss(t.constant(pts), x); }, colors, 1e-4));
    for (auto* m : {&albedo, &shading})
      for (ad::Parameter* p : m->parameters())
        acc.add(ad::finite_difference_check(
            [&](ad::Tape& t) {
              ad::Var x = t.constant(pts);
              return image_loss(x, colors_of(t, x));
            },
            *p, 1e-5));
  }
  return acc.result();
}

}  // namespace suites

inline std::vector<SuiteResult> run_gradcheck_suites() {
  return {suites::primitives(), suites::deformation(), suites::regularization(), suites::render()};
}

}  // namespace handsplat
