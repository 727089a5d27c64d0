#pragma once

// Signed distance MLP with an explicit first-order gradient graph.
//
// The substrate has no higher-order derivatives, so grad_p F is recorded as a
// composition of primitives (the chain rule through each softplus layer). Any
// loss on the gradient, such as the eikonal term, is then differentiable with
// respect to the weights like any other tape value.

#include "handsplat/geom_ops.hpp"
#include "handsplat/nn.hpp"

#include <Eigen/Core>

namespace handsplat {

struct SdfConfig {
  std::size_t layers = 4;  // hidden layers; 0 gives an affine function
  std::size_t width = 128;
  double beta = 100.0;  // softplus sharpness
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double scale = 1.0;        // inputs are normalized as (p - center) / scale
  double init_radius = 0.5;  // initial sphere, in normalized units
  std::uint64_t seed = 1;
};

class SdfNetwork {
 public:
  struct Output {
    ad::Var value;     // N x 1
    ad::Var gradient;  // N x 3, only when requested
  };

  explicit SdfNetwork(SdfConfig cfg = {}) : cfg_(std::move(cfg)) {
    std::mt19937_64 rng(cfg_.seed);
    std::size_t in = 3;
    for (std::size_t k = 0; k < cfg_.layers; ++k) {
      hidden_.emplace_back(fmt::format("sdf.l{}", k), in, cfg_.width);
      hidden_.back().init_normal(rng, 0.0, std::sqrt(2.0) / std::sqrt(static_cast<double>(cfg_.width)));
      in = cfg_.width;
    }
    out_ = nn::Linear("sdf.out", in, 1);
    // Geometric initialization: the network starts close to |x| - init_radius.
    if (cfg_.layers > 0) {
      out_.init_normal(rng, std::sqrt(M_PI) / std::sqrt(static_cast<double>(in)), 1e-6);
      out_.b.value.fill(-cfg_.init_radius);
    } else {
      out_.init_normal(rng, 0.0, 1.0 / std::sqrt(3.0));
    }
  }

  /// Affine net f(p) = w . p + b (scale 1, centered at the origin).
  static SdfNetwork affine(const Eigen::Vector3d& w, double b) {
    SdfConfig cfg;
    cfg.layers = 0;
    SdfNetwork net(cfg);
    for (int c = 0; c < 3; ++c) net.out_.w.value[static_cast<std::size_t>(c)] = w[c];
    net.out_.b.value[0] = b;
    return net;
  }

  Output evaluate(ad::Tape& tape, ad::Var points, bool with_gradient = true) {
    if (points.cols() != 3) throw ShapeError("sdf: points must be N x 3, got " + points.value().shape_str());
    const std::size_t n = points.rows();
    Tensor shift(1, 3);
    for (std::size_t c = 0; c < 3; ++c) shift[c] = -cfg_.center[static_cast<Eigen::Index>(c)] / cfg_.scale;
    ad::Var h = ad::add(ad::scale(points, 1.0 / cfg_.scale), tape.constant(std::move(shift)));
    std::vector<ad::Var> weights, pre;
    for (auto& layer : hidden_) {
      ad::Var w = tape.param(layer.w);
      ad::Var z = ad::add(ad::matmul(h, w), tape.param(layer.b));
      weights.push_back(w);
      pre.push_back(z);
      h = ad::softplus(z, cfg_.beta);
    }
    ad::Var wo = tape.param(out_.w);
    Output out;
    out.value = ad::scale(ad::add(ad::matmul(h, wo), tape.param(out_.b)), cfg_.scale);
    if (with_gradient) {
      // d f / d p = d g / d x because the scale factors cancel.
      ad::Var g = ad::matmul(tape.constant(Tensor(n, 1, 1.0)), ad::transpose(wo));
      for (std::size_t k = hidden_.size(); k-- > 0;)
        g = ad::matmul(ad::mul(g, ad::sigmoid(ad::scale(pre[k], cfg_.beta))), ad::transpose(weights[k]));
      out.gradient = g;
    }
    return out;
  }

  /// Plain batched evaluation (no gradients recorded).
  Eigen::VectorXd values(const RowMatrix& p) {
    ad::Tape tape;
    const Tensor v = evaluate(tape, tape.constant(Tensor::from_matrix(p)), false).value.value();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  RowMatrix gradients(const RowMatrix& p) {
    ad::Tape tape;
    return evaluate(tape, tape.constant(Tensor::from_matrix(p)), true).gradient.value().mat();
  }
  double operator()(const Eigen::Vector3d& p) { return values(RowMatrix(p.transpose()))(0); }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& l : hidden_) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    out.push_back(&out_.w);
    out.push_back(&out_.b);
    return out;
  }
  void set_frozen(bool frozen) {
    for (auto* p : parameters()) p->frozen = frozen;
  }
  const SdfConfig& config() const { return cfg_; }

 private:
  SdfConfig cfg_;
  std::vector<nn::Linear> hidden_;
  nn::Linear out_;
};

/// Both forms of the regularizer: raw sums as written, and per-point means used
/// for training.
struct RegularizationTerms {
  ad::Var sdf_sum;   // sum_i F(p_i)^2 over canonical points
  ad::Var eik_sum;   // sum over points and omega of (|grad F| - 1)^2
  ad::Var sdf_mean;  // sdf_sum / N_C
  ad::Var eik_mean;  // eik_sum / (N_C + N_omega)
  ad::Var point_gradient;  // grad F at the canonical points, N_C x 3
};

inline std::vector<std::size_t> index_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

/// Omega takes part in the eikonal term only.
inline RegularizationTerms regularization_loss(SdfNetwork& net, ad::Tape& tape, ad::Var coords, const Tensor& omega) {
  if (omega.rows() == 0) throw std::invalid_argument("regularization_loss: omega is empty");
  const std::size_t nc = coords.rows(), no = omega.rows();
  const auto eval = net.evaluate(tape, ad::concat({coords, tape.constant(omega)}, 0), true);
  RegularizationTerms r;
  r.sdf_sum = ad::sum(ad::square(ad::gather_rows(eval.value, index_range(0, nc))));
  r.eik_sum = ad::sum(ad::square(ad::add_scalar(ad::l2norm_rows(eval.gradient), -1.0)));
  r.sdf_mean = ad::scale(r.sdf_sum, 1.0 / static_cast<double>(nc));
  r.eik_mean = ad::scale(r.eik_sum, 1.0 / static_cast<double>(nc + no));
  r.point_gradient = ad::gather_rows(eval.gradient, index_range(0, nc));
  return r;
}

/// Unit normals from an SDF gradient; rows with |grad| < 1e-8 are zero and flagged.
inline ad::Var normals_from_gradient(ad::Var gradient, std::vector<std::uint8_t>* degenerate = nullptr) {
  return ad::normalize_rows(gradient, 1e-8, degenerate);
}

}  // namespace handsplat

#include "handsplat/adam.hpp"

namespace handsplat {

struct SdfFitConfig {
  std::size_t steps = 2000;
  std::size_t batch = 512;
  double lr = 1e-3;
  double eikonal_weight = 0.1;
  std::uint64_t seed = 3;
};

/// Supervised fit of F to target distances, with an eikonal term on the same
/// minibatch. Returns the final minibatch loss (residuals divided by the
/// network's input scale).
inline double fit_sdf(SdfNetwork& net, const RowMatrix& samples, const Eigen::VectorXd& targets,
                      const SdfFitConfig& cfg) {
  if (samples.rows() != targets.size() || samples.rows() == 0)
    throw std::invalid_argument("fit_sdf: samples and targets disagree");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, samples.rows() - 1);
  Adam adam;
  const auto params = net.parameters();
  const std::size_t b = std::min<std::size_t>(cfg.batch, static_cast<std::size_t>(samples.rows()));
  double last = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Tensor x(b, 3), y(b, 1);
    for (std::size_t i = 0; i < b; ++i) {
      const Eigen::Index k = pick(rng);
      for (std::size_t c = 0; c < 3; ++c) x(i, c) = samples(k, static_cast<Eigen::Index>(c));
      y[i] = targets(k);
    }
    for (auto* p : params) p->zero_grad();
    ad::Tape tape;
    const auto out = net.evaluate(tape, tape.constant(std::move(x)), true);
    // Residuals in normalized units, so the fit term and the eikonal term
    // keep their balance whatever the scene scale.
    ad::Var fit = ad::mean(ad::square(ad::scale(ad::sub(out.value, tape.constant(std::move(y))), 1.0 / net.config().scale)));
    ad::Var eik = ad::mean(ad::square(ad::add_scalar(ad::l2norm_rows(out.gradient), -1.0)));
    ad::Var loss = ad::add(fit, ad::scale(eik, cfg.eikonal_weight));
    last = loss.value().item();
    tape.backward(loss);
    adam.step(params, cfg.lr);
  }
  return last;
}

}  // namespace handsplat
