#pragma once

// Template rig, forward kinematics, blendshape + skinning deformation and the
// normal-deformation Jacobians.
//
// Jacobian note: a canonical point is deformed as
//   p_D = sum_j w_j T_j (p_C + B_s + B_p)
// where w, B_s and B_p depend only on the point's bound template vertex, not on
// p_C itself. The derivative is therefore exactly J = sum_j w_j R_j, with R_j
// the rotation block of T_j. Normals use the row-vector form n J^-1.

#include "handsplat/geom_ops.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

namespace handsplat {

using Face = std::array<std::uint32_t, 3>;

struct TemplateRig {
  RowMatrix vertices;        // N_M x 3, meters
  std::vector<Face> faces;
  RowMatrix weights;         // N_M x N_j
  RowMatrix shape_bases;     // 3 N_M x n_shape; row 3v + c is coordinate c of vertex v
  RowMatrix pose_bases;      // 3 N_M x 9 (N_j - 1)
  std::vector<int> parents;  // parents[0] == 0 (root is its own parent)
  RowMatrix rest_joints;     // N_j x 3

  std::size_t num_vertices() const { return static_cast<std::size_t>(vertices.rows()); }
  std::size_t num_joints() const { return parents.size(); }
  std::size_t num_shape() const { return static_cast<std::size_t>(shape_bases.cols()); }

  /// Joints ordered so that every parent precedes its children. Throws if the
  /// parent list is not a tree rooted at joint 0.
  std::vector<std::size_t> joint_order() const {
    const std::size_t J = parents.size();
    if (J == 0 || parents[0] != 0) throw std::invalid_argument("rig: joint 0 must be the root (parents[0] == 0)");
    std::vector<std::vector<std::size_t>> children(J);
    for (std::size_t j = 1; j < J; ++j) {
      if (parents[j] < 0 || static_cast<std::size_t>(parents[j]) >= J || static_cast<std::size_t>(parents[j]) == j)
        throw std::invalid_argument(fmt::format("rig: joint {} has invalid parent {}", j, parents[j]));
      children[static_cast<std::size_t>(parents[j])].push_back(j);
    }
    std::vector<std::size_t> order{0};
    for (std::size_t k = 0; k < order.size(); ++k)
      for (std::size_t c : children[order[k]]) order.push_back(c);
    if (order.size() != J) throw std::invalid_argument("rig: bone hierarchy has a cycle or is disconnected");
    return order;
  }

  void validate() const {
    const auto N = vertices.rows();
    const auto J = static_cast<Eigen::Index>(parents.size());
    if (N == 0) throw std::invalid_argument("rig: no vertices");
    if (vertices.cols() != 3) throw ShapeError("rig: vertices must be N x 3");
    if (weights.rows() != N || weights.cols() != J)
      throw ShapeError(fmt::format("rig: weights are {}x{}, expected {}x{}", weights.rows(), weights.cols(), N, J));
    if (shape_bases.rows() != 3 * N) throw ShapeError("rig: shape_bases must have 3 N_M rows");
    if (pose_bases.rows() != 3 * N || pose_bases.cols() != 9 * (J - 1))
      throw ShapeError(fmt::format("rig: pose_bases are {}x{}, expected {}x{}", pose_bases.rows(), pose_bases.cols(),
                                   3 * N, 9 * (J - 1)));
    if (rest_joints.rows() != J || rest_joints.cols() != 3) throw ShapeError("rig: rest_joints must be N_j x 3");
    for (Eigen::Index v = 0; v < N; ++v) {
      if ((weights.row(v).array() < 0.0).any())
        throw std::invalid_argument(fmt::format("rig: negative skinning weight at vertex {}", v));
      if (std::abs(weights.row(v).sum() - 1.0) > 1e-6)
        throw std::invalid_argument(fmt::format("rig: skinning weights of vertex {} do not sum to 1", v));
    }
    for (const Face& f : faces)
      for (auto i : f)
        if (i >= static_cast<std::uint32_t>(N)) throw std::invalid_argument("rig: face index out of range");
    joint_order();
  }
};

struct PoseParams {
  RowMatrix theta;  // N_j x 3 axis-angle
  Eigen::VectorXd phi;
  Eigen::Matrix3d global_rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d global_translation = Eigen::Vector3d::Zero();

  static PoseParams zero(std::size_t joints, std::size_t n_shape = 10) {
    PoseParams p;
    p.theta = RowMatrix::Zero(static_cast<Eigen::Index>(joints), 3);
    p.phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_shape));
    return p;
  }

  Eigen::Matrix4d global() const {
    Eigen::Matrix4d g = Eigen::Matrix4d::Identity();
    g.topLeftCorner<3, 3>() = global_rotation;
    g.topRightCorner<3, 1>() = global_translation;
    return g;
  }
};

/// World transforms of every bone.
struct BoneTransforms {
  std::vector<Eigen::Matrix4d> T;

  /// J x 12 tensor of the row-major 3x4 upper blocks.
  Tensor flat() const {
    Tensor out(T.size(), 12);
    for (std::size_t j = 0; j < T.size(); ++j)
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) out(j, r * 4 + c) = T[j](static_cast<int>(r), static_cast<int>(c));
    return out;
  }
};

namespace detail {

inline Eigen::Matrix4d local_transform(const Eigen::Matrix3d& R, const Eigen::Vector3d& joint) {
  Eigen::Matrix4d L = Eigen::Matrix4d::Identity();
  L.topLeftCorner<3, 3>() = R;
  L.topRightCorner<3, 1>() = joint - R * joint;
  return L;
}

inline void check_pose(const TemplateRig& rig, const PoseParams& pose) {
  if (static_cast<std::size_t>(pose.theta.rows()) != rig.num_joints() || pose.theta.cols() != 3)
    throw ShapeError(fmt::format("pose: theta is {}x{}, rig has {} joints", pose.theta.rows(), pose.theta.cols(),
                                 rig.num_joints()));
  if (static_cast<std::size_t>(pose.phi.size()) != rig.num_shape())
    throw ShapeError(fmt::format("pose: phi has {} entries, rig has {} shape bases", pose.phi.size(), rig.num_shape()));
}

}  // namespace detail

inline BoneTransforms forward_kinematics(const TemplateRig& rig, const PoseParams& pose) {
  detail::check_pose(rig, pose);
  const std::size_t J = rig.num_joints();
  BoneTransforms out;
  out.T.resize(J);
  const Eigen::Matrix4d global = pose.global();
  for (std::size_t j : rig.joint_order()) {
    const auto jj = static_cast<Eigen::Index>(j);
    const Eigen::Matrix3d R = ad::rodrigues(Eigen::Vector3d(pose.theta.row(jj).transpose()));
    const Eigen::Matrix4d L = detail::local_transform(R, rig.rest_joints.row(jj).transpose());
    out.T[j] = (j == 0 ? global : out.T[static_cast<std::size_t>(rig.parents[j])]) * L;
  }
  return out;
}

/// Flattened (R_j - I) over non-root joints, 9 (N_j - 1) entries.
inline Eigen::VectorXd pose_features(const RowMatrix& theta) {
  const Eigen::Index J = theta.rows();
  Eigen::VectorXd f(9 * (J - 1));
  for (Eigen::Index j = 1; j < J; ++j) {
    const Eigen::Matrix3d R = ad::rodrigues(Eigen::Vector3d(theta.row(j).transpose())) - Eigen::Matrix3d::Identity();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) f(9 * (j - 1) + 3 * a + b) = R(a, b);
  }
  return f;
}

/// Per-template-vertex blendshape offsets B_s + B_p (N_M x 3).
inline RowMatrix template_offsets(const TemplateRig& rig, const PoseParams& pose) {
  detail::check_pose(rig, pose);
  const Eigen::VectorXd flat = rig.shape_bases * pose.phi + rig.pose_bases * pose_features(pose.theta);
  return Eigen::Map<const RowMatrix>(flat.data(), rig.vertices.rows(), 3);
}

/// Binding of canonical points to their nearest template vertex. Basis rows are
/// read through the index rather than copied per point.
struct PerPointRigData {
  std::vector<std::size_t> nearest;
  RowMatrix weights;  // N_C x N_j, rows copied from the template

  std::size_t size() const { return nearest.size(); }
};

inline RowMatrix point_shape_basis(const TemplateRig& rig, const PerPointRigData& d, std::size_t i) {
  return rig.shape_bases.middleRows(3 * static_cast<Eigen::Index>(d.nearest.at(i)), 3);
}

inline RowMatrix point_pose_basis(const TemplateRig& rig, const PerPointRigData& d, std::size_t i) {
  return rig.pose_bases.middleRows(3 * static_cast<Eigen::Index>(d.nearest.at(i)), 3);
}

/// Index of the nearest row of `ref` for every row of `query` (ties -> lowest index).
inline std::vector<std::size_t> nearest_rows(const RowMatrix& query, const RowMatrix& ref) {
  if (ref.rows() == 0) throw std::invalid_argument("nearest_rows: empty reference set");
  const Eigen::Index n = query.rows(), m = ref.rows();
  std::vector<std::size_t> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = query(i, 0), y = query(i, 1), z = query(i, 2);
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double dx = ref(k, 0) - x, dy = ref(k, 1) - y, dz = ref(k, 2) - z;
      const double d2 = dx * dx + dy * dy + dz * dz;
      if (d2 < best) {
        best = d2;
        arg = k;
      }
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arg);
  }
  return out;
}

inline PerPointRigData bind_canonical_points(const TemplateRig& rig, const RowMatrix& coords) {
  if (rig.num_vertices() == 0) throw std::invalid_argument("bind_canonical_points: empty rig");
  if (coords.rows() == 0) throw std::invalid_argument("bind_canonical_points: empty point set");
  PerPointRigData d;
  d.nearest = nearest_rows(coords, rig.vertices);
  d.weights.resize(coords.rows(), rig.weights.cols());
  for (std::size_t i = 0; i < d.nearest.size(); ++i)
    d.weights.row(static_cast<Eigen::Index>(i)) = rig.weights.row(static_cast<Eigen::Index>(d.nearest[i]));
  return d;
}

inline RowMatrix deform_points(const TemplateRig& rig, const PerPointRigData& data, const BoneTransforms& transforms,
                               const PoseParams& pose, const RowMatrix& coords) {
  if (static_cast<std::size_t>(coords.rows()) != data.size() || coords.cols() != 3)
    throw ShapeError(fmt::format("deform_points: {} coordinates for {} bound points", coords.rows(), data.size()));
  if (transforms.T.size() != static_cast<std::size_t>(data.weights.cols()))
    throw ShapeError("deform_points: transform count does not match skinning weights");
  const RowMatrix off = template_offsets(rig, pose);
  RowMatrix out(coords.rows(), 3);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
    for (std::size_t j = 0; j < transforms.T.size(); ++j) {
      const double w = data.weights(i, static_cast<Eigen::Index>(j));
      if (w != 0.0) A += w * transforms.T[j];
    }
    const Eigen::Vector3d x =
        coords.row(i).transpose() + off.row(static_cast<Eigen::Index>(data.nearest[static_cast<std::size_t>(i)])).transpose();
    out.row(i) = (A.topLeftCorner<3, 3>() * x + A.topRightCorner<3, 1>()).transpose();
  }
  return out;
}

/// Inverse skinning Jacobians as an N x 9 tensor of row-major 3x3 blocks.
struct JacobianInverses {
  Tensor inv;
  std::size_t singular = 0;  // rows where |det J| < 1e-8 used the pseudo-inverse
};

inline JacobianInverses jacobian_inverses(const RowMatrix& weights, const BoneTransforms& transforms) {
  if (static_cast<std::size_t>(weights.cols()) != transforms.T.size())
    throw ShapeError("jacobian_inverses: weights and transforms disagree on joint count");
  JacobianInverses out;
  const auto n = static_cast<std::size_t>(weights.rows());
  out.inv = Tensor(n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Matrix3d Jm = Eigen::Matrix3d::Zero();
    for (std::size_t j = 0; j < transforms.T.size(); ++j)
      Jm += weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * transforms.T[j].topLeftCorner<3, 3>();
    Eigen::Matrix3d inv;
    if (std::abs(Jm.determinant()) < 1e-8) {
      ++out.singular;
      inv = Jm.completeOrthogonalDecomposition().pseudoInverse();
    } else {
      inv = Jm.inverse();
    }
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) out.inv(i, static_cast<std::size_t>(3 * a + b)) = inv(a, b);
  }
  return out;
}

/// Rows of a per-template tensor picked by each point's binding.
inline Tensor gather_bound(const Tensor& per_template, const PerPointRigData& data) {
  const std::size_t C = per_template.cols();
  Tensor out(data.size(), C);
  for (std::size_t i = 0; i < data.size(); ++i)
    std::copy_n(per_template.data() + data.nearest[i] * C, C, out.data() + i * C);
  return out;
}

/// Row i = n_i J_i^-1 (row-vector convention). Not renormalized.
inline RowMatrix deform_normals(const RowMatrix& normals, const Tensor& jacobian_inv) {
  if (static_cast<std::size_t>(normals.rows()) != jacobian_inv.rows() || jacobian_inv.cols() != 9)
    throw ShapeError("deform_normals: normals and Jacobians disagree on point count");
  RowMatrix out(normals.rows(), 3);
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    const Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> M(jacobian_inv.data() + 9 * i);
    out.row(i) = normals.row(i) * M;
  }
  return out;
}

/// Area-weighted vertex normals of the rest template, unit length.
inline RowMatrix template_normals(const TemplateRig& rig) {
  RowMatrix n = RowMatrix::Zero(rig.vertices.rows(), 3);
  for (const Face& f : rig.faces) {
    const Eigen::Vector3d a = rig.vertices.row(f[0]), b = rig.vertices.row(f[1]), c = rig.vertices.row(f[2]);
    const Eigen::RowVector3d fn = (b - a).cross(c - a).transpose();
    for (auto i : f) n.row(i) += fn;
  }
  const Eigen::RowVector3d centroid = rig.vertices.colwise().mean();
  for (Eigen::Index v = 0; v < n.rows(); ++v) {
    double len = n.row(v).norm();
    if (len < 1e-12) {
      n.row(v) = rig.vertices.row(v) - centroid;
      len = n.row(v).norm();
      if (len < 1e-12) {
        n.row(v) << 0, 0, 1;
        len = 1.0;
      }
    }
    n.row(v) /= len;
  }
  return n;
}

namespace ad {

/// Differentiable forward kinematics: theta (N_j x 3) -> world transforms as an
/// N_j x 12 tensor of 3x4 blocks, for a fixed global transform.
inline Var forward_kinematics(const TemplateRig& rig, Var theta, const Eigen::Matrix4d& global) {
  const Tensor& th = theta.value();
  const std::size_t J = rig.num_joints();
  if (th.rows() != J || th.cols() != 3)
    throw ShapeError(fmt::format("forward_kinematics: theta {} for a {}-joint rig", th.shape_str(), J));
  const auto order = rig.joint_order();
  std::vector<Eigen::Matrix4d> G(J), L(J);
  for (std::size_t j : order) {
    const Eigen::Matrix3d R = rodrigues(Eigen::Vector3d(th(j, 0), th(j, 1), th(j, 2)));
    L[j] = handsplat::detail::local_transform(R, rig.rest_joints.row(static_cast<Eigen::Index>(j)).transpose());
    G[j] = (j == 0 ? global : G[static_cast<std::size_t>(rig.parents[j])]) * L[j];
  }
  Tensor out(J, 12);
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) out(j, r * 4 + c) = G[j](static_cast<int>(r), static_cast<int>(c));
  const TemplateRig* prig = &rig;
  return theta.tape->record(
      "forward_kinematics", std::move(out), {theta},
      [prig, order, G = std::move(G), L = std::move(L), th, global](const Tensor& g, std::span<Tensor* const> gi) {
        const std::size_t J = order.size();
        std::vector<Eigen::Matrix4d> dG(J, Eigen::Matrix4d::Zero());
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 4; ++c) dG[j](static_cast<int>(r), static_cast<int>(c)) = g(j, r * 4 + c);
        for (std::size_t k = J; k-- > 0;) {
          const std::size_t j = order[k];
          const bool root = j == 0;
          const std::size_t p = root ? 0 : static_cast<std::size_t>(prig->parents[j]);
          const Eigen::Matrix4d& P = root ? global : G[p];
          const Eigen::Matrix4d dL = P.transpose() * dG[j];
          if (!root) dG[p] += dG[j] * L[j].transpose();
          const Eigen::Vector3d jt = prig->rest_joints.row(static_cast<Eigen::Index>(j)).transpose();
          const Eigen::Matrix3d dR = dL.topLeftCorner<3, 3>() - dL.topRightCorner<3, 1>() * jt.transpose();
          const auto dRdw = rodrigues_derivatives(Eigen::Vector3d(th(j, 0), th(j, 1), th(j, 2)));
          for (std::size_t a = 0; a < 3; ++a) (*gi[0])(j, a) += (dR.array() * dRdw[a].array()).sum();
        }
      });
}

/// Blendshape offsets of every template vertex (N_M x 3) from theta (N_j x 3)
/// and phi (n_shape x 1).
inline Var template_offsets(const TemplateRig& rig, Var theta, Var phi) {
  Tape& tape = *theta.tape;
  const std::size_t J = rig.num_joints();
  const auto N = rig.num_vertices();
  Var rot = rodrigues(theta);
  std::vector<std::size_t> non_root(J - 1);
  std::iota(non_root.begin(), non_root.end(), std::size_t{1});
  Tensor eye(J - 1, 9);
  for (std::size_t j = 0; j + 1 < J; ++j) eye(j, 0) = eye(j, 4) = eye(j, 8) = 1.0;
  Var feat = reshape(sub(gather_rows(rot, non_root), tape.constant(std::move(eye))), {9 * (J - 1), 1});
  Var pose_off = matmul(tape.constant(Tensor::from_matrix(rig.pose_bases)), feat);
  Var shape_off = matmul(tape.constant(Tensor::from_matrix(rig.shape_bases)), phi);
  return reshape(add(shape_off, pose_off), {N, 3});
}

/// Differentiable deformation of canonical points (N_C x 3) to the posed space.
inline Var deform_points(const TemplateRig& rig, const PerPointRigData& data, Var coords, Var theta, Var phi,
                         const Eigen::Matrix4d& global) {
  if (coords.rows() != data.size() || coords.cols() != 3)
    throw ShapeError(fmt::format("deform_points: coords {} for {} bound points", coords.value().shape_str(), data.size()));
  Tape& tape = *coords.tape;
  Var T = forward_kinematics(rig, theta, global);
  Var blend = matmul(tape.constant(Tensor::from_matrix(rig.weights)), T);  // N_M x 12
  Var off = template_offsets(rig, theta, phi);
  Var x = add(coords, gather_rows(off, data.nearest));
  return rowwise_affine(gather_rows(blend, data.nearest), x);
}

}  // namespace ad

}  // namespace handsplat
