#pragma once

// Fused per-row geometric operations used by the rig and shading paths.

#include "handsplat/ops.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cstdint>

namespace handsplat::ad {

namespace detail {

inline Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d k;
  k << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return k;
}

/// Coefficients of R = I + A K + B K^2 and a = A'(t)/t, b = B'(t)/t.
struct RodriguesCoeffs {
  double A, B, a, b;
};

inline RodriguesCoeffs rodrigues_coeffs(double t) {
  const double t2 = t * t;
  if (t < 1e-3) {
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0};
  }
  const double s = std::sin(t), c = std::cos(t);
  return {s / t, (1.0 - c) / t2, (t * c - s) / (t2 * t), (t * s - 2.0 * (1.0 - c)) / (t2 * t2)};
}

}  // namespace detail

/// Rotation matrix of an axis-angle vector; exact for any angle.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& w) {
  const auto k = detail::skew(w);
  const auto c = detail::rodrigues_coeffs(w.norm());
  return Eigen::Matrix3d::Identity() + c.A * k + c.B * k * k;
}

/// d R / d w_i for i = 0..2.
inline std::array<Eigen::Matrix3d, 3> rodrigues_derivatives(const Eigen::Vector3d& w) {
  const auto k = detail::skew(w);
  const Eigen::Matrix3d k2 = k * k;
  const auto c = detail::rodrigues_coeffs(w.norm());
  std::array<Eigen::Matrix3d, 3> out;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Matrix3d e = detail::skew(Eigen::Vector3d::Unit(i));
    out[static_cast<std::size_t>(i)] = c.a * w[i] * k + c.A * e + c.b * w[i] * k2 + c.B * (e * k + k * e);
  }
  return out;
}

/// Axis-angle rows (N x 3) -> row-major rotation matrices (N x 9).
inline Var rodrigues(Var axis_angle) {
  const Tensor& W = axis_angle.value();
  if (W.cols() != 3) throw ShapeError("rodrigues: expected N x 3 axis-angle input, got " + W.shape_str());
  const std::size_t n = W.rows();
  Tensor out(n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Matrix3d r = rodrigues(Eigen::Vector3d(W(i, 0), W(i, 1), W(i, 2)));
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) out(i, static_cast<std::size_t>(a * 3 + b)) = r(a, b);
  }
  const Tensor* pw = &W;
  return axis_angle.tape->record("rodrigues", std::move(out), {axis_angle},
                                 [pw, n](const Tensor& g, std::span<Tensor* const> gi) {
                                   for (std::size_t i = 0; i < n; ++i) {
                                     const auto d = rodrigues_derivatives(
                                         Eigen::Vector3d((*pw)(i, 0), (*pw)(i, 1), (*pw)(i, 2)));
                                     for (std::size_t k = 0; k < 3; ++k) {
                                       double acc = 0.0;
                                       for (int a = 0; a < 3; ++a)
                                         for (int b = 0; b < 3; ++b)
                                           acc += g(i, static_cast<std::size_t>(a * 3 + b)) * d[k](a, b);
                                       (*gi[0])(i, k) += acc;
                                     }
                                   }
                                 });
}

/// out_i = A_i[:, :3] x_i + A_i[:, 3] with A_i the row-major 3x4 block in row i
/// of an N x 12 tensor.
inline Var rowwise_affine(Var transforms, Var points) {
  const Tensor& A = transforms.value();
  const Tensor& X = points.value();
  if (A.cols() != 12 || X.cols() != 3 || A.rows() != X.rows())
    throw ShapeError(fmt::format("rowwise_affine: transforms {} and points {} are not conformable", A.shape_str(),
                                 X.shape_str()));
  const std::size_t n = X.rows();
  Tensor out(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = A.data() + i * 12;
    const double* x = X.data() + i * 3;
    for (std::size_t r = 0; r < 3; ++r)
      out(i, r) = a[r * 4] * x[0] + a[r * 4 + 1] * x[1] + a[r * 4 + 2] * x[2] + a[r * 4 + 3];
  }
  const Tensor* pa = &A;
  const Tensor* px = &X;
  return transforms.tape->record(
      "rowwise_affine", std::move(out), {transforms, points}, [pa, px, n](const Tensor& g, std::span<Tensor* const> gi) {
        for (std::size_t i = 0; i < n; ++i) {
          const double* a = pa->data() + i * 12;
          const double* x = px->data() + i * 3;
          const double* gr = g.data() + i * 3;
          if (gi[0]) {
            double* da = gi[0]->data() + i * 12;
            for (std::size_t r = 0; r < 3; ++r) {
              da[r * 4] += gr[r] * x[0];
              da[r * 4 + 1] += gr[r] * x[1];
              da[r * 4 + 2] += gr[r] * x[2];
              da[r * 4 + 3] += gr[r];
            }
          }
          if (gi[1]) {
            double* dx = gi[1]->data() + i * 3;
            for (std::size_t c = 0; c < 3; ++c) dx[c] += gr[0] * a[c] + gr[1] * a[4 + c] + gr[2] * a[8 + c];
          }
        }
      });
}

/// Row-vector times per-row 3x3 matrix: out_i = v_i M_i, M_i row-major in row i
/// of an N x 9 tensor.
inline Var rowvec_mat(Var vectors, Var matrices) {
  const Tensor& V = vectors.value();
  const Tensor& M = matrices.value();
  if (V.cols() != 3 || M.cols() != 9 || V.rows() != M.rows())
    throw ShapeError(
        fmt::format("rowvec_mat: vectors {} and matrices {} are not conformable", V.shape_str(), M.shape_str()));
  const std::size_t n = V.rows();
  Tensor out(n, 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < 3; ++r) s += V(i, r) * M(i, r * 3 + c);
      out(i, c) = s;
    }
  const Tensor* pv = &V;
  const Tensor* pm = &M;
  return vectors.tape->record("rowvec_mat", std::move(out), {vectors, matrices},
                              [pv, pm, n](const Tensor& g, std::span<Tensor* const> gi) {
                                for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t r = 0; r < 3; ++r)
                                    for (std::size_t c = 0; c < 3; ++c) {
                                      if (gi[0]) (*gi[0])(i, r) += g(i, c) * (*pm)(i, r * 3 + c);
                                      if (gi[1]) (*gi[1])(i, r * 3 + c) += (*pv)(i, r) * g(i, c);
                                    }
                              });
}

/// Rows scaled to unit length. Rows with norm below `eps` are degenerate: they
/// map to zero and carry no gradient. `degenerate` (optional) receives flags.
inline Var normalize_rows(Var a, double eps = 1e-8, std::vector<std::uint8_t>* degenerate = nullptr) {
  const Tensor& A = a.value();
  const std::size_t n = A.rows(), C = A.cols();
  Tensor out(A.shape());
  std::vector<double> norms(n);
  if (degenerate) degenerate->assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += A(i, c) * A(i, c);
    norms[i] = std::sqrt(s);
    if (norms[i] < eps) {
      if (degenerate) (*degenerate)[i] = 1;
      continue;
    }
    for (std::size_t c = 0; c < C; ++c) out(i, c) = A(i, c) / norms[i];
  }
  Var v = a.tape->record("normalize_rows", std::move(out), {a}, {});
  const Tensor* po = &v.value();
  a.tape->set_backward(v, [po, norms = std::move(norms), eps, C](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < norms.size(); ++i) {
      if (norms[i] < eps) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += g(i, c) * (*po)(i, c);
      for (std::size_t c = 0; c < C; ++c) (*gi[0])(i, c) += (g(i, c) - (*po)(i, c) * dot) / norms[i];
    }
  });
  return v;
}

}  // namespace handsplat::ad
