#pragma once

#include "handsplat/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <random>

namespace handsplat::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

namespace detail {

inline std::vector<std::size_t> pick_coordinates(std::size_t n, std::size_t max_coords, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_coords == 0 || max_coords >= n) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

inline GradCheckResult compare(const Tensor& analytic, Tensor& x, const std::vector<std::size_t>& coords, double h,
                               const std::function<double()>& eval) {
  GradCheckResult res;
  for (std::size_t i : coords) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = eval();
    x[i] = orig - h;
    const double fm = eval();
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double err = relative_error(a, numeric);
    ++res.checked;
    if (res.checked == 1 || err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = i;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
  }
  return res;
}

}  // namespace detail

using ScalarFn = std::function<Var(Tape&, Var)>;

/// Central-difference check of d f(x) / dx. Error per coordinate is
/// |analytic - numeric| / max(1, |analytic|, |numeric|); the maximum is returned.
/// `max_coords` > 0 checks a seeded random subset.
inline GradCheckResult finite_difference_check(const ScalarFn& f, Tensor x, double h = 1e-4, std::size_t max_coords = 0,
                                               std::uint64_t seed = 1) {
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var loss = f(tape, xv);
    tape.backward(loss);
    analytic = xv.grad();
  }
  auto eval = [&]() {
    Tape tape;
    Var xv = tape.constant(x);
    return f(tape, xv).value().item();
  };
  return detail::compare(analytic, x, detail::pick_coordinates(x.size(), max_coords, seed), h, eval);
}

/// Same check against a Parameter consumed inside `f` via tape.param().
inline GradCheckResult finite_difference_check(const std::function<Var(Tape&)>& f, Parameter& p, double h = 1e-4,
                                               std::size_t max_coords = 0, std::uint64_t seed = 1) {
  p.zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  const Tensor analytic = p.grad;
  p.zero_grad();
  auto eval = [&]() {
    Tape tape;
    return f(tape).value().item();
  };
  return detail::compare(analytic, p.value, detail::pick_coordinates(p.value.size(), max_coords, seed), h, eval);
}

}  // namespace handsplat::ad
