#pragma once

// Training losses: masked RGB L1, silhouette L1, a fixed random convolutional
// feature loss, and their weighted sum.

#include "handsplat/ops.hpp"

#include <fmt/core.h>

#include <cstdio>
#include <random>

namespace handsplat {

struct LossWeights {
  double lambda_rgb = 1.0;
  double lambda_vgg = 0.1;
  double lambda_mask = 1.0;
  double lambda_reg = 1.0;
  double lambda_sdf = 1.0;
  double lambda_eik = 0.1;

  void validate() const {
    for (double w : {lambda_rgb, lambda_vgg, lambda_mask, lambda_reg, lambda_sdf, lambda_eik})
      if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and nonnegative");
  }
};

/// Mean absolute difference over foreground pixels and channels. `rendered` is
/// P x 3, `target` P x 3, `mask` P x 1 in {0, 1}. An empty mask gives 0.
inline ad::Var rgb_loss(ad::Var rendered, const Tensor& target, const Tensor& mask, bool warn_empty = true) {
  if (rendered.value().shape() != target.shape() || mask.rows() != target.rows() || mask.cols() != 1)
    throw ShapeError(fmt::format("rgb_loss: rendered {} target {} mask {}", rendered.value().shape_str(),
                                 target.shape_str(), mask.shape_str()));
  ad::Tape& tape = *rendered.tape;
  double n = 0.0;
  for (double m : mask.values()) n += m;
  if (n == 0.0) {
    if (warn_empty) std::fprintf(stderr, "warning: rgb_loss with an empty foreground mask\n");
    return ad::scale(ad::sum(rendered), 0.0);
  }
  ad::Var d = ad::abs(ad::sub(rendered, tape.constant(target)));
  return ad::scale(ad::sum(ad::mul(d, tape.constant(mask))), 1.0 / (3.0 * n));
}

/// Mean absolute difference between rendered alpha (P x 1) and mask (P x 1).
inline ad::Var mask_loss(ad::Var alpha, const Tensor& mask) {
  if (alpha.value().shape() != mask.shape())
    throw ShapeError(fmt::format("mask_loss: alpha {} mask {}", alpha.value().shape_str(), mask.shape_str()));
  return ad::mean(ad::abs(ad::sub(alpha, alpha.tape->constant(mask))));
}

namespace ad {

/// Patch extraction for a k x k convolution with the given stride and zero
/// padding. Input: (H W) x C image rows in row-major pixel order. Output:
/// (H' W') x (k k C), column order (dy, dx, c).
inline Var im2col(Var x, int height, int width, int k = 3, int stride = 2, int pad = 1) {
  const Tensor& X = x.value();
  const auto C = X.cols();
  if (X.rows() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
    throw ShapeError(fmt::format("im2col: {} rows for a {}x{} image", X.rows(), height, width));
  const int oh = (height + 2 * pad - k) / stride + 1, ow = (width + 2 * pad - k) / stride + 1;
  // Source row for each output entry, -1 for padding.
  auto src = std::make_shared<std::vector<long>>(static_cast<std::size_t>(oh * ow * k * k), -1);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const int y = oy * stride + dy - pad, xx = ox * stride + dx - pad;
          if (y >= 0 && y < height && xx >= 0 && xx < width)
            (*src)[static_cast<std::size_t>(((oy * ow + ox) * k + dy) * k + dx)] = y * width + xx;
        }
  const std::size_t kk = static_cast<std::size_t>(k * k);
  Tensor out(static_cast<std::size_t>(oh * ow), kk * C);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t q = 0; q < kk; ++q) {
      const long s = (*src)[r * kk + q];
      if (s >= 0) std::copy_n(X.data() + static_cast<std::size_t>(s) * C, C, out.data() + (r * kk + q) * C);
    }
  return x.tape->record("im2col", std::move(out), {x}, [src, kk, C](const Tensor& g, std::span<Tensor* const> gi) {
    Tensor& gx = *gi[0];
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t q = 0; q < kk; ++q) {
        const long s = (*src)[r * kk + q];
        if (s < 0) continue;
        const double* gp = g.data() + (r * kk + q) * C;
        double* dst = gx.data() + static_cast<std::size_t>(s) * C;
        for (std::size_t c = 0; c < C; ++c) dst[c] += gp[c];
      }
  });
}

}  // namespace ad

/// Frozen three-stage feature pyramid (3x3 convolutions, stride 2, ReLU;
/// 8 / 16 / 32 channels) with seeded random weights, standing in for a
/// pretrained feature network.
class PerceptualExtractor {
 public:
  static constexpr std::uint64_t kSeed = 0x5EED;

  explicit PerceptualExtractor(std::uint64_t seed = kSeed) {
    std::mt19937_64 rng(seed);
    std::size_t cin = 3;
    for (std::size_t cout : {8, 16, 32}) {
      Tensor w(9 * cin, cout);
      std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(9 * cin)));
      for (double& v : w.values()) v = n(rng);
      weights_.push_back(std::move(w));
      cin = cout;
    }
  }

  /// Feature maps of each stage for a (H W) x 3 image.
  std::vector<ad::Var> features(ad::Var image, int height, int width) const {
    std::vector<ad::Var> out;
    ad::Var x = image;
    int h = height, w = width;
    for (const Tensor& W : weights_) {
      x = ad::relu(ad::matmul(ad::im2col(x, h, w), image.tape->constant(W)));
      h = (h - 1) / 2 + 1;
      w = (w - 1) / 2 + 1;
      out.push_back(x);
    }
    return out;
  }

  /// Constant feature maps of a target image.
  std::vector<Tensor> target_features(const Tensor& image, int height, int width) const {
    ad::Tape tape;
    std::vector<Tensor> out;
    for (const ad::Var& f : features(tape.constant(image), height, width)) out.push_back(f.value());
    return out;
  }

  /// Sum over stages of the mean absolute feature difference.
  ad::Var loss(ad::Var image, const std::vector<Tensor>& target, int height, int width) const {
    const auto f = features(image, height, width);
    if (target.size() != f.size()) throw ShapeError("perceptual loss: wrong number of target stages");
    ad::Var total = ad::mean(ad::abs(ad::sub(f[0], image.tape->constant(target[0]))));
    for (std::size_t s = 1; s < f.size(); ++s)
      total = ad::add(total, ad::mean(ad::abs(ad::sub(f[s], image.tape->constant(target[s])))));
    return total;
  }

  ad::Var loss(ad::Var image, const Tensor& target, int height, int width) const {
    return loss(image, target_features(target, height, width), height, width);
  }

  const std::vector<Tensor>& weights() const { return weights_; }

 private:
  std::vector<Tensor> weights_;
};

/// Scalar loss terms of one step, for logging.
struct LossParts {
  double rgb = 0.0, vgg = 0.0, mask = 0.0, reg = 0.0;
  double sdf = 0.0, eik = 0.0;
  double total = 0.0;
};

inline double total_loss(const LossParts& p, const LossWeights& w) {
  for (auto [name, v] : {std::pair{"rgb", p.rgb}, {"vgg", p.vgg}, {"mask", p.mask}, {"reg", p.reg}})
    if (!std::isfinite(v)) throw NonFiniteError(fmt::format("total_loss: {} term is {}", name, v));
  return w.lambda_rgb * p.rgb + w.lambda_vgg * p.vgg + w.lambda_mask * p.mask + w.lambda_reg * p.reg;
}

/// lambda_rgb L_rgb + lambda_vgg L_vgg + lambda_mask L_mask + lambda_reg L_reg
/// on the tape.
inline ad::Var total_loss(ad::Var rgb, ad::Var vgg, ad::Var mask, ad::Var reg, const LossWeights& w) {
  const std::pair<const char*, ad::Var> parts[] = {{"rgb", rgb}, {"vgg", vgg}, {"mask", mask}, {"reg", reg}};
  for (const auto& [name, v] : parts)
    if (!v.value().all_finite()) throw NonFiniteError(fmt::format("total_loss: {} term is not finite", name));
  return ad::add(ad::add(ad::scale(rgb, w.lambda_rgb), ad::scale(vgg, w.lambda_vgg)),
                 ad::add(ad::scale(mask, w.lambda_mask), ad::scale(reg, w.lambda_reg)));
}

}  // namespace handsplat
