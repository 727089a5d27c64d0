#pragma once

// Image metrics on [0, 1] images stored as (H W) x C tensors.

#include "handsplat/tensor.hpp"

#include <fmt/core.h>

namespace handsplat {

inline constexpr double kPsnrCap = 99.0;

inline double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(fmt::format("mse: {} vs {}", a.shape_str(), b.shape_str()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// 10 log10(1 / MSE), capped at 99 dB when MSE < 1e-10.
inline double psnr(const Tensor& a, const Tensor& b) {
  const double m = mse(a, b);
  if (m < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

/// Normalized 1-D Gaussian taps.
inline std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double s = 0.0;
  for (int i = 0; i < size; ++i) s += w[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  for (double& v : w) v /= s;
  return w;
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5) and
/// channels, with k1 = 0.01, k2 = 0.03 and dynamic range 1.
inline double ssim(const Tensor& a, const Tensor& b, int height, int width, int window = 11, double sigma = 1.5) {
  if (a.shape() != b.shape()) throw ShapeError(fmt::format("ssim: {} vs {}", a.shape_str(), b.shape_str()));
  if (a.rows() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
    throw ShapeError(fmt::format("ssim: {} rows for a {}x{} image", a.rows(), height, width));
  if (height < window || width < window) throw std::invalid_argument("ssim: image smaller than the window");
  const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const auto taps = gaussian_taps(window, sigma);
  const int oh = height - window + 1, ow = width - window + 1;
  const std::size_t C = a.cols();
  double total = 0.0;
  // Separable filtering of x, y, x^2, y^2, xy: horizontal pass then vertical.
  std::vector<double> h(5 * static_cast<std::size_t>(height * ow));
  for (std::size_t c = 0; c < C; ++c) {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc[5] = {0, 0, 0, 0, 0};
        for (int k = 0; k < window; ++k) {
          const std::size_t p = static_cast<std::size_t>(y * width + x + k) * C + c;
          const double u = a[p], v = b[p], w = taps[static_cast<std::size_t>(k)];
          acc[0] += w * u;
          acc[1] += w * v;
          acc[2] += w * u * u;
          acc[3] += w * v * v;
          acc[4] += w * u * v;
        }
        for (int q = 0; q < 5; ++q) h[static_cast<std::size_t>((y * ow + x) * 5 + q)] = acc[q];
      }
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double m[5] = {0, 0, 0, 0, 0};
        for (int k = 0; k < window; ++k)
          for (int q = 0; q < 5; ++q) m[q] += taps[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(((y + k) * ow + x) * 5 + q)];
        const double sa = m[2] - m[0] * m[0], sb = m[3] - m[1] * m[1], sab = m[4] - m[0] * m[1];
        total += ((2 * m[0] * m[1] + C1) * (2 * sab + C2)) / ((m[0] * m[0] + m[1] * m[1] + C1) * (sa + sb + C2));
      }
  }
  return total / static_cast<double>(static_cast<std::size_t>(oh * ow) * C);
}

/// |A and B| / |A or B| with both masks thresholded at 0.5. Two empty masks
/// give 1.
inline double iou(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError(fmt::format("iou: {} vs {}", a.shape_str(), b.shape_str()));
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] > 0.5, y = b[i] > 0.5;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct ImageMetrics {
  double iou = 0.0, psnr = 0.0, ssim = 0.0;
};

inline ImageMetrics evaluate_metrics(const Tensor& rgb, const Tensor& rgb_ref, const Tensor& mask, const Tensor& mask_ref,
                                     int height, int width) {
  return {iou(mask, mask_ref), psnr(rgb, rgb_ref), ssim(rgb, rgb_ref, height, width)};
}

}  // namespace handsplat
