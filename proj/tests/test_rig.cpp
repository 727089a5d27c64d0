#include "handsplat/gradcheck.hpp"
#include "handsplat/rig_io.hpp"
#include "handsplat/toy_rig.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <random>

using namespace handsplat;

namespace {

Eigen::Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

// Adjugate / determinant: independent of Eigen's inverse.
Eigen::Matrix3d inverse_by_cofactors(const Eigen::Matrix3d& m) {
  Eigen::Matrix3d adj;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const int r1 = (c + 1) % 3, r2 = (c + 2) % 3, c1 = (r + 1) % 3, c2 = (r + 2) % 3;
      adj(r, c) = m(r1, c1) * m(r2, c2) - m(r1, c2) * m(r2, c1);
    }
  const double det = m(0, 0) * adj(0, 0) + m(0, 1) * adj(1, 0) + m(0, 2) * adj(2, 0);
  return adj / det;
}

Eigen::Matrix3d block(const Tensor& t, std::size_t i) {
  Eigen::Matrix3d m;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) m(a, b) = t(i, static_cast<std::size_t>(3 * a + b));
  return m;
}

TemplateRig single_bone_rig() {
  TemplateRig rig;
  rig.vertices = RowMatrix::Zero(1, 3);
  rig.weights = RowMatrix::Ones(1, 1);
  rig.shape_bases = RowMatrix::Zero(3, 10);
  rig.pose_bases = RowMatrix::Zero(3, 0);
  rig.parents = {0};
  rig.rest_joints = RowMatrix::Zero(1, 3);
  return rig;
}

RowMatrix random_points(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  RowMatrix p(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) << u(rng), u(rng), u(rng);
  return p;
}

PoseParams random_pose(const TemplateRig& rig, std::mt19937_64& rng, double amp = 0.6) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PoseParams p = PoseParams::zero(rig.num_joints(), rig.num_shape());
  for (Eigen::Index j = 0; j < p.theta.rows(); ++j) p.theta.row(j) << amp * u(rng), amp * u(rng), amp * u(rng);
  for (Eigen::Index k = 0; k < p.phi.size(); ++k) p.phi(k) = u(rng);
  return p;
}

const TemplateRig& toy() {
  static const TemplateRig rig = build_toy_rig();
  return rig;
}

}  // namespace

TEST(ForwardKinematics, ZeroPoseIsIdentity) {
  const auto T = forward_kinematics(toy(), PoseParams::zero(16));
  for (const auto& t : T.T) EXPECT_TRUE(t.isApprox(Eigen::Matrix4d::Identity(), 1e-15));
}

TEST(ForwardKinematics, GlobalTranslationMovesEveryBone) {
  auto pose = PoseParams::zero(16);
  pose.global_translation = Eigen::Vector3d(1, 0, 0);
  Eigen::Matrix4d expect = Eigen::Matrix4d::Identity();
  expect(0, 3) = 1.0;
  for (const auto& t : forward_kinematics(toy(), pose).T) EXPECT_TRUE(t.isApprox(expect, 1e-15));
}

TEST(ForwardKinematics, SingleBoneQuarterTurn) {
  const auto rig = single_bone_rig();
  auto pose = PoseParams::zero(1);
  pose.theta.row(0) << 0, 0, M_PI / 2;
  const Eigen::Matrix4d T = forward_kinematics(rig, pose).T[0];
  const Eigen::Vector4d y = T * Eigen::Vector4d(1, 0, 0, 1);
  EXPECT_NEAR(y.x(), 0.0, 1e-15);
  EXPECT_NEAR(y.y(), 1.0, 1e-15);
  EXPECT_NEAR(y.z(), 0.0, 1e-15);
}

TEST(ForwardKinematics, RotationBlocksAreOrthonormal) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto pose = random_pose(toy(), rng, 2.5);
    pose.global_rotation = rot_z(0.3 * trial);
    for (const auto& t : forward_kinematics(toy(), pose).T) {
      const Eigen::Matrix3d R = t.topLeftCorner<3, 3>();
      EXPECT_TRUE((R * R.transpose()).isApprox(Eigen::Matrix3d::Identity(), 1e-6));
      EXPECT_NEAR(R.determinant(), 1.0, 1e-6);
    }
  }
}

TEST(ForwardKinematics, TapeMatchesPlain) {
  std::mt19937_64 rng(5);
  const auto pose = random_pose(toy(), rng);
  const Tensor plain = forward_kinematics(toy(), pose).flat();
  ad::Tape tape;
  ad::Var T = ad::forward_kinematics(toy(), tape.constant(Tensor::from_matrix(pose.theta)), pose.global());
  EXPECT_LT(max_abs_diff(plain, T.value()), 1e-14);
}

TEST(ForwardKinematics, ChildRotatesAboutItsRestJoint) {
  // Bending a chain's middle joint leaves the joint itself fixed.
  const auto rig = make_chain_rig(5, 3);
  auto pose = PoseParams::zero(3);
  pose.theta.row(1) << 0, 0, 0.7;
  const auto T = forward_kinematics(rig, pose);
  const Eigen::Vector4d j1(rig.rest_joints(1, 0), rig.rest_joints(1, 1), rig.rest_joints(1, 2), 1.0);
  EXPECT_TRUE((T.T[1] * j1).isApprox(j1, 1e-15));
  EXPECT_TRUE((T.T[2] * j1).isApprox(j1, 1e-15));
}

TEST(Bind, PointOnVertexCopiesItsRows) {
  const auto& rig = toy();
  const std::size_t k = 123;
  RowMatrix p = rig.vertices.row(static_cast<Eigen::Index>(k));
  const auto d = bind_canonical_points(rig, p);
  EXPECT_EQ(d.nearest[0], k);
  EXPECT_EQ(RowMatrix(d.weights.row(0)), RowMatrix(rig.weights.row(static_cast<Eigen::Index>(k))));
  EXPECT_EQ(point_shape_basis(rig, d, 0), RowMatrix(rig.shape_bases.middleRows(3 * k, 3)));
  EXPECT_EQ(point_pose_basis(rig, d, 0), RowMatrix(rig.pose_bases.middleRows(3 * k, 3)));
}

TEST(Bind, TemplateBindsToItself) {
  const auto& rig = toy();
  const auto d = bind_canonical_points(rig, rig.vertices);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.nearest[i], i);
  EXPECT_EQ(d.weights, rig.weights);
}

TEST(Bind, MatchesBruteForceOnRandomQueries) {
  const auto& rig = toy();
  std::mt19937_64 rng(6);
  const RowMatrix q = random_points(rng, 1000, -0.05, 0.2);
  const auto d = bind_canonical_points(rig, q);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    Eigen::Index best = 0;
    (rig.vertices.rowwise() - q.row(i)).rowwise().squaredNorm().minCoeff(&best);
    EXPECT_EQ(d.nearest[static_cast<std::size_t>(i)], static_cast<std::size_t>(best));
  }
}

TEST(Bind, RejectsEmptyInputs) {
  EXPECT_THROW(bind_canonical_points(toy(), RowMatrix(0, 3)), std::invalid_argument);
  TemplateRig empty;
  empty.vertices = RowMatrix(0, 3);
  EXPECT_THROW(bind_canonical_points(empty, RowMatrix::Zero(1, 3)), std::invalid_argument);
}

TEST(Bind, InvariantUnderRigidMotion) {
  std::mt19937_64 rng(12);
  const RowMatrix q = random_points(rng, 500, -0.05, 0.2);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(0.8, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  const Eigen::RowVector3d t(0.3, -0.1, 0.5);
  TemplateRig moved = toy();
  moved.vertices = (toy().vertices * R.transpose()).rowwise() + t;
  const RowMatrix qm = (q * R.transpose()).rowwise() + t;
  EXPECT_EQ(bind_canonical_points(toy(), q).nearest, bind_canonical_points(moved, qm).nearest);
}

TEST(Deform, ZeroPoseIsIdentity) {
  std::mt19937_64 rng(7);
  const RowMatrix p = random_points(rng, 300, -0.02, 0.15);
  const auto d = bind_canonical_points(toy(), p);
  const auto pose = PoseParams::zero(16);
  const RowMatrix out = deform_points(toy(), d, forward_kinematics(toy(), pose), pose, p);
  EXPECT_LT((out - p).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Deform, SingleBoneTranslation) {
  const auto rig = single_bone_rig();
  const RowMatrix p = RowMatrix::Zero(1, 3);
  const auto d = bind_canonical_points(rig, p);
  auto pose = PoseParams::zero(1);
  pose.global_translation = Eigen::Vector3d(1, 0, 0);
  const RowMatrix out = deform_points(rig, d, forward_kinematics(rig, pose), pose, p);
  EXPECT_DOUBLE_EQ(out(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(out(0, 2), 0.0);
}

TEST(Deform, FirstShapeBasisSlice) {
  const auto& rig = toy();
  const RowMatrix p = rig.vertices.topRows(50);
  const auto d = bind_canonical_points(rig, p);
  auto pose = PoseParams::zero(16);
  pose.phi(0) = 1.0;
  const RowMatrix out = deform_points(rig, d, forward_kinematics(rig, pose), pose, p);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out(i, c), p(i, c) + rig.shape_bases(3 * i + c, 0), 1e-15);
}

TEST(Deform, RigidEquivariance) {
  std::mt19937_64 rng(8);
  const RowMatrix p = random_points(rng, 200, -0.02, 0.15);
  const auto d = bind_canonical_points(toy(), p);
  auto pose = random_pose(toy(), rng);
  const RowMatrix base = deform_points(toy(), d, forward_kinematics(toy(), pose), pose, p);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(1.1, Eigen::Vector3d(-1, 0.5, 2).normalized()).toRotationMatrix();
  const Eigen::Vector3d t(0.2, 0.4, -0.3);
  pose.global_rotation = R;
  pose.global_translation = t;
  const RowMatrix moved = deform_points(toy(), d, forward_kinematics(toy(), pose), pose, p);
  const RowMatrix expect = (base * R.transpose()).rowwise() + t.transpose();
  EXPECT_LT((moved - expect).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Deform, TapeMatchesPlain) {
  std::mt19937_64 rng(9);
  const RowMatrix p = random_points(rng, 100, -0.02, 0.15);
  const auto d = bind_canonical_points(toy(), p);
  auto pose = random_pose(toy(), rng);
  pose.global_rotation = rot_z(0.4);
  pose.global_translation << 0.1, 0.0, 0.5;
  const RowMatrix plain = deform_points(toy(), d, forward_kinematics(toy(), pose), pose, p);
  ad::Tape tape;
  ad::Var out = ad::deform_points(toy(), d, tape.constant(Tensor::from_matrix(p)),
                                  tape.constant(Tensor::from_matrix(pose.theta)),
                                  tape.constant(Tensor::from_matrix(pose.phi)), pose.global());
  EXPECT_LT(max_abs_diff(out.value(), Tensor::from_matrix(plain)), 1e-14);
}

class DeformGradient : public ::testing::Test {
 protected:
  TemplateRig rig = make_chain_rig(10, 3, 21);
  RowMatrix p;
  PerPointRigData d;
  PoseParams pose;
  Tensor weights;

  void SetUp() override {
    std::mt19937_64 rng(22);
    p = rig.vertices + 0.003 * random_points(rng, 10, -1, 1);
    d = bind_canonical_points(rig, p);
    pose = random_pose(rig, rng, 0.8);
    pose.global_rotation = rot_z(0.2);
    weights = Tensor::from_matrix(random_points(rng, 10, -1, 1));
  }
  ad::Var loss(ad::Tape& t, ad::Var coords, ad::Var theta, ad::Var phi) {
    return ad::sum(ad::mul(ad::deform_points(rig, d, coords, theta, phi, pose.global()), t.constant(weights)));
  }
};

TEST_F(DeformGradient, WrtTheta) {
  auto f = [&](ad::Tape& t, ad::Var theta) {
    return loss(t, t.constant(Tensor::from_matrix(p)), theta, t.constant(Tensor::from_matrix(pose.phi)));
  };
  EXPECT_LT(ad::finite_difference_check(f, Tensor::from_matrix(pose.theta)).max_rel_error, 1e-4);
}

TEST_F(DeformGradient, WrtPhi) {
  auto f = [&](ad::Tape& t, ad::Var phi) {
    return loss(t, t.constant(Tensor::from_matrix(p)), t.constant(Tensor::from_matrix(pose.theta)), phi);
  };
  EXPECT_LT(ad::finite_difference_check(f, Tensor::from_matrix(pose.phi)).max_rel_error, 1e-4);
}

TEST_F(DeformGradient, WrtCanonicalCoords) {
  auto f = [&](ad::Tape& t, ad::Var coords) {
    return loss(t, coords, t.constant(Tensor::from_matrix(pose.theta)), t.constant(Tensor::from_matrix(pose.phi)));
  };
  EXPECT_LT(ad::finite_difference_check(f, Tensor::from_matrix(p)).max_rel_error, 1e-4);
}

TEST(Jacobian, IdentityTransforms) {
  const auto pose = PoseParams::zero(16);
  const auto inv = jacobian_inverses(toy().weights, forward_kinematics(toy(), pose));
  EXPECT_EQ(inv.singular, 0u);
  for (std::size_t i = 0; i < inv.inv.rows(); ++i) EXPECT_TRUE(block(inv.inv, i).isApprox(Eigen::Matrix3d::Identity(), 1e-15));
}

TEST(Jacobian, GlobalRotationInverseIsTranspose) {
  const auto rig = single_bone_rig();
  auto pose = PoseParams::zero(1);
  pose.global_rotation = Eigen::AngleAxisd(0.9, Eigen::Vector3d(1, 1, 0).normalized()).toRotationMatrix();
  const auto inv = jacobian_inverses(rig.weights, forward_kinematics(rig, pose));
  EXPECT_TRUE(block(inv.inv, 0).isApprox(pose.global_rotation.transpose(), 1e-12));
}

TEST(Jacobian, TwoBoneBlendMatchesCofactorInverse) {
  BoneTransforms T;
  T.T = {Eigen::Matrix4d::Identity(), Eigen::Matrix4d::Identity()};
  T.T[1].topLeftCorner<3, 3>() = rot_z(M_PI / 2);
  RowMatrix w(1, 2);
  w << 0.5, 0.5;
  const auto inv = jacobian_inverses(w, T);
  const Eigen::Matrix3d expect = inverse_by_cofactors(0.5 * (Eigen::Matrix3d::Identity() + rot_z(M_PI / 2)));
  EXPECT_TRUE(block(inv.inv, 0).isApprox(expect, 1e-12));
}

TEST(Jacobian, ProductWithInverseIsIdentity) {
  std::mt19937_64 rng(10);
  const auto pose = random_pose(toy(), rng, 1.2);
  const auto T = forward_kinematics(toy(), pose);
  const auto inv = jacobian_inverses(toy().weights, T);
  for (std::size_t i = 0; i < inv.inv.rows(); ++i) {
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    for (std::size_t j = 0; j < 16; ++j)
      J += toy().weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * T.T[j].topLeftCorner<3, 3>();
    if (std::abs(J.determinant()) < 1e-8) continue;
    EXPECT_LT((J * block(inv.inv, i) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Jacobian, OpposingHalfTurnsUsePseudoInverse) {
  BoneTransforms T;
  T.T = {Eigen::Matrix4d::Identity(), Eigen::Matrix4d::Identity()};
  T.T[1].topLeftCorner<3, 3>() = rot_z(M_PI);
  RowMatrix w(1, 2);
  w << 0.5, 0.5;
  const auto inv = jacobian_inverses(w, T);
  EXPECT_EQ(inv.singular, 1u);
  // 0.5 (I + Rz(pi)) = diag(0, 0, 1), whose pseudo-inverse is itself.
  Eigen::Matrix3d expect = Eigen::Matrix3d::Zero();
  expect(2, 2) = 1.0;
  EXPECT_TRUE(block(inv.inv, 0).isApprox(expect, 1e-12));
  EXPECT_TRUE(inv.inv.all_finite());
}

TEST(Normals, IdentityPoseLeavesNormalsUnchanged) {
  const RowMatrix n = template_normals(toy());
  const auto inv = jacobian_inverses(toy().weights, forward_kinematics(toy(), PoseParams::zero(16)));
  EXPECT_LT((deform_normals(n, inv.inv) - n).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Normals, GlobalQuarterTurnRotatesNormal) {
  const auto rig = single_bone_rig();
  auto pose = PoseParams::zero(1);
  pose.global_rotation = rot_z(M_PI / 2);
  const auto inv = jacobian_inverses(rig.weights, forward_kinematics(rig, pose));
  RowMatrix n(1, 3);
  n << 1, 0, 0;
  const RowMatrix out = deform_normals(n, inv.inv);
  const Eigen::RowVector3d unit = out.row(0).normalized();
  EXPECT_NEAR(unit(0), 0.0, 1e-12);
  EXPECT_NEAR(unit(1), 1.0, 1e-12);
  EXPECT_NEAR(unit(2), 0.0, 1e-12);
}

TEST(Normals, RowConventionEqualsRotatedNormal) {
  std::mt19937_64 rng(11);
  const auto rig = single_bone_rig();
  for (int trial = 0; trial < 50; ++trial) {
    auto pose = PoseParams::zero(1);
    const Eigen::Vector3d axis = random_points(rng, 1, -1, 1).row(0).transpose();
    pose.global_rotation = ad::rodrigues(axis * 2.0);
    const auto inv = jacobian_inverses(rig.weights, forward_kinematics(rig, pose));
    RowMatrix n = random_points(rng, 1, -1, 1);
    n.row(0).normalize();
    const Eigen::RowVector3d row = deform_normals(n, inv.inv).row(0);
    const Eigen::Vector3d col = pose.global_rotation * n.row(0).transpose();
    EXPECT_LT((row.transpose() - col).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(row.norm(), 1.0, 1e-12);
  }
}

TEST(Normals, TemplateNormalsAreUnitAndOutward) {
  const auto& rig = toy();
  const RowMatrix n = template_normals(rig);
  std::size_t outward = 0;
  const Eigen::RowVector3d palm_center(0, 0.05, 0);
  for (Eigen::Index v = 0; v < n.rows(); ++v) {
    EXPECT_NEAR(n.row(v).norm(), 1.0, 1e-6);
    // Palm vertices (first block) should face away from the palm center.
    if (v < 100 && n.row(v).dot(rig.vertices.row(v) - palm_center) > 0) ++outward;
  }
  EXPECT_EQ(outward, 100u);
}

TEST(ToyRig, DefaultCounts) {
  const auto& rig = toy();
  EXPECT_GE(rig.num_vertices(), 700u);
  EXPECT_LE(rig.num_vertices(), 900u);
  EXPECT_EQ(rig.num_joints(), 16u);
  EXPECT_EQ(rig.pose_bases.cols(), 135);
  EXPECT_EQ(rig.shape_bases.cols(), 10);
}

TEST(ToyRig, WeightsAreRowStochastic) {
  const auto& w = toy().weights;
  EXPECT_GE(w.minCoeff(), 0.0);
  for (Eigen::Index v = 0; v < w.rows(); ++v) EXPECT_NEAR(w.row(v).sum(), 1.0, 1e-9);
}

TEST(ToyRig, Deterministic) {
  const auto a = build_toy_rig(), b = build_toy_rig();
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.shape_bases, b.shape_bases);
  EXPECT_EQ(a.pose_bases, b.pose_bases);
  EXPECT_EQ(a.faces, b.faces);
}

TEST(ToyRig, FingertipFollowsItsOwnBonesOnly) {
  // Bending the index finger must not move the middle fingertip.
  const auto& rig = toy();
  auto pose = PoseParams::zero(16);
  pose.theta.row(2) << 0.9, 0, 0;
  const auto d = bind_canonical_points(rig, rig.vertices);
  const RowMatrix out = deform_points(rig, d, forward_kinematics(rig, pose), pose, rig.vertices);
  const RowMatrix off = template_offsets(rig, pose);
  // Tip caps: the vertex furthest along +y among those bound mostly to the
  // finger's last bone.
  auto tip_of = [&](Eigen::Index bone) {
    Eigen::Index best = -1;
    for (Eigen::Index v = 0; v < rig.vertices.rows(); ++v) {
      Eigen::Index arg;
      rig.weights.row(v).maxCoeff(&arg);
      if (arg == bone && (best < 0 || rig.vertices(v, 1) > rig.vertices(best, 1))) best = v;
    }
    return best;
  };
  const Eigen::Index index_tip = tip_of(3), middle_tip = tip_of(6);
  ASSERT_GE(index_tip, 0);
  ASSERT_GE(middle_tip, 0);
  EXPECT_LT((out.row(middle_tip) - rig.vertices.row(middle_tip) - off.row(middle_tip)).norm(), 1e-12);
  EXPECT_GT((out.row(index_tip) - rig.vertices.row(index_tip)).norm(), 0.01);
}

TEST(ToyRig, RejectsBadParents) {
  auto rig = build_toy_rig(small_toy_rig_config());
  rig.parents[3] = 5;
  rig.parents[5] = 3;
  EXPECT_THROW(rig.validate(), std::invalid_argument);
}

TEST(RigFile, RoundTrip) {
  const auto& rig = toy();
  const std::string path = ::testing::TempDir() + "/toy_rig.hsck";
  save_rig(path, rig);
  const auto back = load_rig(path);
  EXPECT_EQ(back.vertices, rig.vertices);
  EXPECT_EQ(back.faces, rig.faces);
  EXPECT_EQ(back.weights, rig.weights);
  EXPECT_EQ(back.shape_bases, rig.shape_bases);
  EXPECT_EQ(back.pose_bases, rig.pose_bases);
  EXPECT_EQ(back.parents, rig.parents);
  EXPECT_EQ(back.rest_joints, rig.rest_joints);
  std::remove(path.c_str());
}

TEST(RigFile, JointRegressorAndMissingFields) {
  const auto rig = make_chain_rig(6, 3);
  auto m = rig_to_container(rig);
  m.erase("J");
  // Regressor that picks vertex 0 for every joint.
  Tensor reg(3, 6);
  for (std::size_t j = 0; j < 3; ++j) reg(j, 0) = 1.0;
  m["J_regressor"] = reg;
  const auto back = rig_from_container(m);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(RowMatrix(back.rest_joints.row(j)), RowMatrix(rig.vertices.row(0)));
  m.erase("weights");
  EXPECT_THROW(rig_from_container(m), std::runtime_error);
}
