#pragma once

// Primitive differentiable operations. Every op works on the matrix view of
// its inputs (rows x cols). Binary elementwise ops accept a right operand of
// identical shape, 1 x cols (row expansion), rows x 1 (column expansion) or
// 1 x 1; nothing else broadcasts.

#include "handsplat/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace handsplat::ad {

namespace detail {

enum class Bcast { Same, Row, Col, Scalar };

inline Bcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape() || (a.rows() == b.rows() && a.cols() == b.cols())) return Bcast::Same;
  if (b.size() == 1) return Bcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::Col;
  throw ShapeError(fmt::format("{}: shapes {} and {} are not conformable", op, a.shape_str(), b.shape_str()));
}

inline std::size_t bindex(Bcast k, std::size_t r, std::size_t c, std::size_t cols) {
  switch (k) {
    case Bcast::Same: return r * cols + c;
    case Bcast::Row: return c;
    case Bcast::Col: return r;
    case Bcast::Scalar: return 0;
  }
  return 0;
}

template <class Fwd, class DA, class DB>
Var binary(const char* name, Var a, Var b, Fwd fwd, DA da, DB db) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Bcast k = broadcast_kind(name, A, B);
  const std::size_t R = A.rows(), C = A.cols();
  Tensor out(A.shape());
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = fwd(A[r * C + c], B[bindex(k, r, c, C)]);
  const Tensor* pa = &A;
  const Tensor* pb = &B;
  return a.tape->record(name, std::move(out), {a, b}, [=](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = r * C + c;
        const std::size_t j = bindex(k, r, c, C);
        const double av = (*pa)[i], bv = (*pb)[j];
        if (gi[0]) (*gi[0])[i] += da(g[i], av, bv);
        if (gi[1]) (*gi[1])[j] += db(g[i], av, bv);
      }
  });
}

template <class Fwd, class Deriv>
Var unary(const char* name, Var a, Fwd fwd, Deriv deriv) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = fwd(A[i]);
  const Tensor* pa = &A;
  const Tensor* po = nullptr;
  Var v = a.tape->record(name, std::move(out), {a}, {});
  po = &v.value();
  a.tape->set_backward(v, [=](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * deriv((*pa)[i], (*po)[i]);
  });
  return v;
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

inline Var sub(Var a, Var b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

inline Var mul(Var a, Var b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

inline Var div(Var a, Var b) {
  return detail::binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

inline Var scale(Var a, double s) {
  return detail::unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var add_scalar(Var a, double s) {
  return detail::unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

/// Numerically stable softplus: (max(bx,0) + log1p(exp(-|bx|))) / b.
inline double softplus_value(double x, double beta = 1.0) {
  const double z = beta * x;
  return (std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)))) / beta;
}

inline double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var softplus(Var a, double beta = 1.0) {
  return detail::unary(
      "softplus", a, [beta](double x) { return softplus_value(x, beta); },
      [beta](double x, double) { return sigmoid_value(beta * x); });
}

inline Var relu(Var a) {
  return detail::unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      "sigmoid", a, [](double x) { return sigmoid_value(x); }, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
  return detail::unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var abs(Var a) {
  return detail::unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Var square(Var a) {
  return detail::unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows())
    throw ShapeError(fmt::format("matmul: shapes {} and {} are not conformable", A.shape_str(), B.shape_str()));
  Tensor out(A.rows(), B.cols());
  out.mat().noalias() = A.mat() * B.mat();
  const Tensor* pa = &A;
  const Tensor* pb = &B;
  return a.tape->record("matmul", std::move(out), {a, b}, [pa, pb](const Tensor& g, std::span<Tensor* const> gi) {
    if (gi[0]) gi[0]->mat().noalias() += g.mat() * pb->mat().transpose();
    if (gi[1]) gi[1]->mat().noalias() += pa->mat().transpose() * g.mat();
  });
}

inline Var transpose(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.cols(), A.rows());
  out.mat() = A.mat().transpose();
  return a.tape->record("transpose", std::move(out), {a}, [](const Tensor& g, std::span<Tensor* const> gi) {
    gi[0]->mat() += g.mat().transpose();
  });
}

/// Row-wise softmax with the row maximum subtracted first.
inline Tensor softmax_rows_value(const Tensor& A) {
  Tensor out(A.shape());
  const std::size_t R = A.rows(), C = A.cols();
  for (std::size_t r = 0; r < R; ++r) {
    const double* in = A.data() + r * C;
    double* o = out.data() + r * C;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) m = std::max(m, in[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += (o[c] = std::exp(in[c] - m));
    for (std::size_t c = 0; c < C; ++c) o[c] /= s;
  }
  return out;
}

inline Var softmax_rows(Var a) {
  Var v = a.tape->record("softmax_rows", softmax_rows_value(a.value()), {a}, {});
  {
    const Tensor* py = &v.value();
    a.tape->set_backward(v, [py](const Tensor& g, std::span<Tensor* const> gi) {
      const std::size_t R = py->rows(), C = py->cols();
      for (std::size_t r = 0; r < R; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += g[r * C + c] * (*py)[r * C + c];
        for (std::size_t c = 0; c < C; ++c) (*gi[0])[r * C + c] += (*py)[r * C + c] * (g[r * C + c] - dot);
      }
    });
  }
  return v;
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape->record("sum", Tensor::scalar(s), {a}, [](const Tensor& g, std::span<Tensor* const> gi) {
    const double gv = g[0];
    for (double& x : gi[0]->values()) x += gv;
  });
}

inline Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape->record("mean", Tensor::scalar(s / static_cast<double>(n)), {a},
                        [n](const Tensor& g, std::span<Tensor* const> gi) {
                          const double gv = g[0] / static_cast<double>(n);
                          for (double& x : gi[0]->values()) x += gv;
                        });
}

/// Euclidean norm of each row: rows x 1.
inline Var l2norm_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t R = A.rows(), C = A.cols();
  Tensor out(R, 1);
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += A[r * C + c] * A[r * C + c];
    out[r] = std::sqrt(s);
  }
  const Tensor* pa = &A;
  Var v = a.tape->record("l2norm_rows", std::move(out), {a}, {});
  {
    const Tensor* pn = &v.value();
    a.tape->set_backward(v, [pa, pn, R, C](const Tensor& g, std::span<Tensor* const> gi) {
      for (std::size_t r = 0; r < R; ++r) {
        const double n = (*pn)[r];
        if (n <= 0.0) continue;  // subgradient 0 at the origin
        const double s = g[r] / n;
        for (std::size_t c = 0; c < C; ++c) (*gi[0])[r * C + c] += s * (*pa)[r * C + c];
      }
    });
  }
  return v;
}

/// Concatenate along axis 0 (stack rows) or axis 1 (append columns).
inline Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape* tape = parts.front().tape;
  std::vector<std::size_t> sizes;
  std::size_t R = parts.front().rows(), C = parts.front().cols();
  if (axis == 0) {
    R = 0;
    for (const Var& p : parts) {
      if (p.cols() != C) throw ShapeError(fmt::format("concat(axis=0): column mismatch {} vs {}", shape_string(parts.front().shape()), shape_string(p.shape())));
      sizes.push_back(p.rows());
      R += p.rows();
    }
  } else if (axis == 1) {
    C = 0;
    for (const Var& p : parts) {
      if (p.rows() != R) throw ShapeError(fmt::format("concat(axis=1): row mismatch {} vs {}", shape_string(parts.front().shape()), shape_string(p.shape())));
      sizes.push_back(p.cols());
      C += p.cols();
    }
  } else {
    throw ShapeError("concat: axis must be 0 or 1");
  }
  Tensor out(R, C);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& P = parts[k].value();
    if (axis == 0)
      out.mat().middleRows(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(sizes[k])) = P.mat();
    else
      out.mat().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(sizes[k])) = P.mat();
    off += sizes[k];
  }
  return tape->record("concat", std::move(out), parts, [sizes, axis](const Tensor& g, std::span<Tensor* const> gi) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const auto ok = static_cast<Eigen::Index>(o), sk = static_cast<Eigen::Index>(sizes[k]);
      if (gi[k]) {
        if (axis == 0)
          gi[k]->mat() += g.mat().middleRows(ok, sk);
        else
          gi[k]->mat() += g.mat().middleCols(ok, sk);
      }
      o += sizes[k];
    }
  });
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  if (begin > end || end > A.cols())
    throw ShapeError(fmt::format("slice_cols: [{}, {}) out of range for {}", begin, end, A.shape_str()));
  const auto b = static_cast<Eigen::Index>(begin), n = static_cast<Eigen::Index>(end - begin);
  Tensor out(A.rows(), end - begin);
  out.mat() = A.mat().middleCols(b, n);
  return a.tape->record("slice_cols", std::move(out), {a}, [b, n](const Tensor& g, std::span<Tensor* const> gi) {
    gi[0]->mat().middleCols(b, n) += g.mat();
  });
}

/// out[i] = a[idx[i]]; repeated indices accumulate in backward.
inline Var gather_rows(Var a, std::vector<std::size_t> idx) {
  const Tensor& A = a.value();
  const std::size_t C = A.cols();
  Tensor out(idx.size(), C);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= A.rows())
      throw ShapeError(fmt::format("gather_rows: index {} out of range for {}", idx[i], A.shape_str()));
    std::copy_n(A.data() + idx[i] * C, C, out.data() + i * C);
  }
  return a.tape->record("gather_rows", std::move(out), {a},
                        [idx = std::move(idx), C](const Tensor& g, std::span<Tensor* const> gi) {
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            double* dst = gi[0]->data() + idx[i] * C;
                            const double* src = g.data() + i * C;
                            for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
                          }
                        });
}

inline Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape->record("reshape", std::move(out), {a}, [](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
  });
}

}  // namespace handsplat::ad
