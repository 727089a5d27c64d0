#pragma once

// Dense layers over the tape.

#include "handsplat/ops.hpp"

#include <random>

namespace handsplat::nn {

struct Linear {
  ad::Parameter w;  // in x out
  ad::Parameter b;  // 1 x out

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out)
      : w(name + ".w", Tensor(in, out)), b(name + ".b", Tensor(1, out)) {}

  std::size_t in() const { return w.value.rows(); }
  std::size_t out() const { return w.value.cols(); }

  ad::Var operator()(ad::Tape& tape, ad::Var x) { return ad::add(ad::matmul(x, tape.param(w)), tape.param(b)); }

  void init_normal(std::mt19937_64& rng, double mean, double stddev) {
    std::normal_distribution<double> n(mean, stddev);
    for (double& v : w.value.values()) v = n(rng);
    b.value.fill(0.0);
  }
  /// He-style initialization for ReLU-like hidden layers.
  void init_he(std::mt19937_64& rng) { init_normal(rng, 0.0, std::sqrt(2.0 / static_cast<double>(in()))); }

  std::vector<ad::Parameter*> parameters() { return {&w, &b}; }
};

}  // namespace handsplat::nn
