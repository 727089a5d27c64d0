#pragma once

// MANO-compatible rig file, stored in the tensor container.
//
// Records (all float64):
//   v_template       N_M x 3           rest vertices, meters
//   f                F x 3             triangle vertex indices (integral values)
//   weights          N_M x N_j         skinning weights
//   shapedirs        N_M x 3 x S       shape blendshapes
//   posedirs         N_M x 3 x 9(N_j-1) pose blendshapes on flattened (R - I)
//   kintree_parents  N_j               parent index per joint; root is 0 or -1
//   J                N_j x 3           rest joints, or instead:
//   J_regressor      N_j x N_M         joints = J_regressor * v_template

#include "handsplat/checkpoint.hpp"
#include "handsplat/rig.hpp"

namespace handsplat {

inline TensorMap rig_to_container(const TemplateRig& rig) {
  TensorMap m;
  const std::size_t N = rig.num_vertices(), J = rig.num_joints();
  m["v_template"] = Tensor::from_matrix(rig.vertices);
  Tensor f(rig.faces.size(), 3);
  for (std::size_t i = 0; i < rig.faces.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) f(i, c) = rig.faces[i][c];
  m["f"] = std::move(f);
  m["weights"] = Tensor::from_matrix(rig.weights);
  m["shapedirs"] = Tensor::from_matrix(rig.shape_bases).reshaped({N, 3, rig.num_shape()});
  m["posedirs"] = Tensor::from_matrix(rig.pose_bases).reshaped({N, 3, 9 * (J - 1)});
  Tensor parents(Shape{J});
  for (std::size_t j = 0; j < J; ++j) parents[j] = rig.parents[j];
  m["kintree_parents"] = std::move(parents);
  m["J"] = Tensor::from_matrix(rig.rest_joints);
  return m;
}

inline TemplateRig rig_from_container(const TensorMap& m) {
  TemplateRig rig;
  const Tensor& v = require(m, "v_template");
  if (v.rank() != 2 || v.cols() != 3) throw ShapeError("rig file: v_template must be N x 3, got " + v.shape_str());
  const std::size_t N = v.rows();
  rig.vertices = v.mat();

  const Tensor& f = require(m, "f");
  if (f.size() % 3 != 0) throw ShapeError("rig file: f must be F x 3");
  for (std::size_t i = 0; i < f.size(); i += 3) {
    Face face{};
    for (std::size_t c = 0; c < 3; ++c) {
      const double x = f[i + c];
      if (x < 0 || x != std::floor(x)) throw std::runtime_error("rig file: face index is not a nonnegative integer");
      face[c] = static_cast<std::uint32_t>(x);
    }
    rig.faces.push_back(face);
  }

  const Tensor& par = require(m, "kintree_parents");
  for (std::size_t j = 0; j < par.size(); ++j) rig.parents.push_back(j == 0 && par[j] < 0 ? 0 : static_cast<int>(par[j]));
  const std::size_t J = rig.parents.size();

  const Tensor& w = require(m, "weights");
  if (w.size() != N * J) throw ShapeError("rig file: weights must be N_M x N_j, got " + w.shape_str());
  rig.weights = w.reshaped({N, J}).mat();

  const Tensor& sd = require(m, "shapedirs");
  if (sd.size() % (3 * N) != 0) throw ShapeError("rig file: shapedirs must be N_M x 3 x S, got " + sd.shape_str());
  rig.shape_bases = sd.reshaped({3 * N, sd.size() / (3 * N)}).mat();

  const Tensor& pd = require(m, "posedirs");
  if (pd.size() != 3 * N * 9 * (J - 1))
    throw ShapeError("rig file: posedirs must be N_M x 3 x 9(N_j - 1), got " + pd.shape_str());
  rig.pose_bases = pd.reshaped({3 * N, 9 * (J - 1)}).mat();

  if (auto it = m.find("J"); it != m.end()) {
    if (it->second.size() != 3 * J) throw ShapeError("rig file: J must be N_j x 3");
    rig.rest_joints = it->second.reshaped({J, 3}).mat();
  } else {
    const Tensor& reg = require(m, "J_regressor");
    if (reg.size() != J * N) throw ShapeError("rig file: J_regressor must be N_j x N_M");
    rig.rest_joints = reg.reshaped({J, N}).mat() * rig.vertices;
  }
  rig.validate();
  return rig;
}

inline void save_rig(const std::string& path, const TemplateRig& rig) { save_container(path, rig_to_container(rig)); }
inline TemplateRig load_rig(const std::string& path) { return rig_from_container(load_container(path)); }

}  // namespace handsplat
