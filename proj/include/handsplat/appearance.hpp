#pragma once

// Context-attention appearance: canonical albedo and pose-aware shading.

#include "handsplat/nn.hpp"

namespace handsplat {

namespace ad {

/// softmax(Q K^T / sqrt(d)) V, evaluated in query tiles so the N_q x N_k score
/// matrix never exists in full. The backward pass recomputes each tile's
/// probabilities from the saved row log-sum-exp.
inline Var cross_attention(Var q, Var k, Var v, std::size_t tile = 64) {
  const Tensor &Q = q.value(), &K = k.value(), &V = v.value();
  if (Q.cols() != K.cols() || K.rows() != V.rows() || K.rows() == 0)
    throw ShapeError(fmt::format("cross_attention: Q {} K {} V {} are not conformable", Q.shape_str(), K.shape_str(),
                                 V.shape_str()));
  const std::size_t nq = Q.rows(), dv = V.cols();
  const double s = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  Tensor out(nq, dv);
  std::vector<double> lse(nq);
  const auto Km = K.mat();
  const auto Vm = V.mat();
  const std::size_t tiles = (nq + tile - 1) / tile;
#pragma omp parallel for schedule(static)
  for (std::size_t t = 0; t < tiles; ++t) {
    const std::size_t r0 = t * tile, nr = std::min(tile, nq - r0);
    const auto Qt = Q.mat().middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(nr));
    RowMatrix S = (Qt * Km.transpose()) * s;
    for (Eigen::Index r = 0; r < S.rows(); ++r) {
      const double m = S.row(r).maxCoeff();
      S.row(r) = (S.row(r).array() - m).exp();
      const double z = S.row(r).sum();
      S.row(r) /= z;
      lse[r0 + static_cast<std::size_t>(r)] = m + std::log(z);
    }
    out.mat().middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(nr)).noalias() = S * Vm;
  }
  Var o = q.tape->record("cross_attention", std::move(out), {q, k, v}, {});
  const Tensor* po = &o.value();
  q.tape->set_backward(o, [pq = &Q, pk = &K, pv = &V, po, lse = std::move(lse), s, tile](
                              const Tensor& g, std::span<Tensor* const> gi) {
    const std::size_t nq = pq->rows();
    const auto Km = pk->mat();
    const auto Vm = pv->mat();
    for (std::size_t r0 = 0; r0 < nq; r0 += tile) {
      const auto nr = static_cast<Eigen::Index>(std::min(tile, nq - r0));
      const auto e0 = static_cast<Eigen::Index>(r0);
      const auto Qt = pq->mat().middleRows(e0, nr);
      const auto dO = g.mat().middleRows(e0, nr);
      RowMatrix P = (Qt * Km.transpose()) * s;
      for (Eigen::Index r = 0; r < nr; ++r) P.row(r) = (P.row(r).array() - lse[r0 + static_cast<std::size_t>(r)]).exp();
      if (gi[2]) gi[2]->mat().noalias() += P.transpose() * dO;
      if (!gi[0] && !gi[1]) continue;
      const Eigen::VectorXd D = (dO.array() * po->mat().middleRows(e0, nr).array()).rowwise().sum();
      RowMatrix dS = dO * Vm.transpose();
      dS = (P.array() * (dS.colwise() - D).array()).matrix() * s;
      if (gi[0]) gi[0]->mat().middleRows(e0, nr).noalias() += dS * Km;
      if (gi[1]) gi[1]->mat().noalias() += dS.transpose() * Qt;
    }
  });
  return o;
}

}  // namespace ad

/// Row-normalized attention weights, for inspection and tests.
inline RowMatrix attention_weights(const RowMatrix& q, const RowMatrix& k) {
  RowMatrix S = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  for (Eigen::Index r = 0; r < S.rows(); ++r) {
    S.row(r) = (S.row(r).array() - S.row(r).maxCoeff()).exp();
    S.row(r) /= S.row(r).sum();
  }
  return S;
}

struct AttentionConfig {
  std::size_t hidden = 128;
  std::size_t d_cross = 64;
  // Inputs are mapped to (x - center) * input_scale before the embedding.
  Eigen::RowVector3d input_center = Eigen::RowVector3d::Zero();
  double input_scale = 1.0;
  std::uint64_t seed = 11;
};

/// Embedding MLP (3 -> hidden -> hidden, ReLU), W_q / W_k / W_v projections to
/// d_cross, cross-attention of queries over keys, then an output MLP
/// (d_cross -> hidden -> out, ReLU) and a range-enforcing nonlinearity.
class ContextAttentionModule {
 public:
  enum class Kind { Albedo, Shading };

  ContextAttentionModule(std::string name, Kind kind, AttentionConfig cfg = {})
      : name_(std::move(name)), kind_(kind), cfg_(std::move(cfg)) {
    const std::size_t H = cfg_.hidden, D = cfg_.d_cross, out = kind_ == Kind::Albedo ? 3 : 1;
    std::mt19937_64 rng(cfg_.seed);
    embed1_ = nn::Linear(name_ + ".embed1", 3, H);
    embed2_ = nn::Linear(name_ + ".embed2", H, H);
    out1_ = nn::Linear(name_ + ".out1", D, H);
    out2_ = nn::Linear(name_ + ".out2", H, out);
    embed1_.init_he(rng);
    embed2_.init_he(rng);
    wq_ = ad::Parameter(name_ + ".wq", Tensor(H, D));
    wk_ = ad::Parameter(name_ + ".wk", Tensor(H, D));
    wv_ = ad::Parameter(name_ + ".wv", Tensor(H, D));
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(H)));
    for (auto* w : {&wq_, &wk_, &wv_})
      for (double& x : w->value.values()) x = n(rng);
    out1_.init_he(rng);
    if (kind_ == Kind::Shading) {
      // Near-zero logits so softplus(o) / ln 2 starts at 1.
      out2_.init_normal(rng, 0.0, 1e-3);
    } else {
      out2_.init_normal(rng, 0.0, 1.0 / std::sqrt(static_cast<double>(H)));
    }
  }

  const std::string& name() const { return name_; }
  Kind kind() const { return kind_; }
  const AttentionConfig& config() const { return cfg_; }

  ad::Var embed(ad::Tape& tape, ad::Var x) {
    Tensor shift(1, 3);
    for (std::size_t c = 0; c < 3; ++c) shift[c] = -cfg_.input_center[static_cast<Eigen::Index>(c)] * cfg_.input_scale;
    ad::Var h = ad::add(ad::scale(x, cfg_.input_scale), tape.constant(std::move(shift)));
    return embed2_(tape, ad::relu(embed1_(tape, h)));
  }

  /// Attention features (N_q x d_cross).
  ad::Var features(ad::Tape& tape, ad::Var queries, ad::Var keys) {
    ad::Var eq = embed(tape, queries);
    ad::Var ek = embed(tape, keys);
    ad::Var Q = ad::matmul(eq, tape.param(wq_));
    ad::Var K = ad::matmul(ek, tape.param(wk_));
    ad::Var V = ad::matmul(ek, tape.param(wv_));
    return ad::cross_attention(Q, K, V);
  }

  /// Albedo in (0, 1)^3 or shading in (0, inf), one row per query.
  ad::Var forward(ad::Tape& tape, ad::Var queries, ad::Var keys) {
    ad::Var o = out2_(tape, ad::relu(out1_(tape, features(tape, queries, keys))));
    if (kind_ == Kind::Albedo) return ad::sigmoid(o);
    return ad::scale(ad::softplus(o), 1.0 / std::log(2.0));
  }

  /// Query / key projections before the softmax, for attention inspection.
  std::pair<RowMatrix, RowMatrix> projections(const RowMatrix& queries, const RowMatrix& keys) {
    ad::Tape tape;
    ad::Var Q = ad::matmul(embed(tape, tape.constant(Tensor::from_matrix(queries))), tape.param(wq_));
    ad::Var K = ad::matmul(embed(tape, tape.constant(Tensor::from_matrix(keys))), tape.param(wk_));
    return {Q.value().mat(), K.value().mat()};
  }

  std::vector<ad::Parameter*> parameters() {
    return {&embed1_.w, &embed1_.b, &embed2_.w, &embed2_.b, &wq_,     &wk_,
            &wv_,       &out1_.w,   &out1_.b,   &out2_.w,   &out2_.b};
  }

 private:
  std::string name_;
  Kind kind_;
  AttentionConfig cfg_;
  nn::Linear embed1_, embed2_, out1_, out2_;
  ad::Parameter wq_, wk_, wv_;
};

/// color_i = albedo_i * shading_i, shading broadcast over channels.
inline ad::Var compose_color(ad::Var albedo, ad::Var shading) {
  if (albedo.rows() != shading.rows() || shading.cols() != 1)
    throw ShapeError(fmt::format("compose_color: albedo {} and shading {}", albedo.value().shape_str(),
                                 shading.value().shape_str()));
  return ad::mul(albedo, shading);
}

}  // namespace handsplat
