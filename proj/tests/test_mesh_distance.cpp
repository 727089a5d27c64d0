#include "handsplat/mesh_distance.hpp"
#include "handsplat/primitives.hpp"
#include "handsplat/toy_rig.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace handsplat;

namespace {

struct Mesh {
  RowMatrix v;
  std::vector<Face> f;
};

Mesh sphere_mesh(int rings, int segments, double r, const Eigen::RowVector3d& center = Eigen::RowVector3d::Zero()) {
  TriMesh t = handsplat::uv_sphere(rings, segments, r, center);
  return {std::move(t.vertices), std::move(t.faces)};
}

Mesh merge(const Mesh& a, const Mesh& b) {
  Mesh m;
  m.v.resize(a.v.rows() + b.v.rows(), 3);
  m.v << a.v, b.v;
  m.f = a.f;
  const auto off = static_cast<std::uint32_t>(a.v.rows());
  for (Face t : b.f) m.f.push_back({t[0] + off, t[1] + off, t[2] + off});
  return m;
}

}  // namespace

TEST(MeshDistance, ClosestPointMatchesDenseSampling) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng));
    const Eigen::Vector3d p = 2.0 * Eigen::Vector3d(u(rng), u(rng), u(rng));
    Eigen::Vector3d bary;
    const Eigen::Vector3d q = closest_point_on_triangle(p, a, b, c, bary);
    EXPECT_NEAR(bary.sum(), 1.0, 1e-12);
    EXPECT_GE(bary.minCoeff(), -1e-12);
    EXPECT_LT((bary(0) * a + bary(1) * b + bary(2) * c - q).norm(), 1e-12);
    double best = std::numeric_limits<double>::infinity();
    const int K = 400;
    for (int i = 0; i <= K; ++i)
      for (int j = 0; i + j <= K; ++j) {
        const double s = static_cast<double>(i) / K, t = static_cast<double>(j) / K;
        best = std::min(best, (p - ((1 - s - t) * a + s * b + t * c)).norm());
      }
    EXPECT_LE((p - q).norm(), best + 1e-12);
    EXPECT_NEAR((p - q).norm(), best, 5e-3 * (b - a).norm() + 5e-3 * (c - a).norm());
  }
}

TEST(MeshDistance, WindingNumberOfClosedSphere) {
  const Mesh s = sphere_mesh(12, 16, 1.0);
  EXPECT_NEAR(winding_number(s.v, s.f, Eigen::Vector3d(0, 0, 0)), 1.0, 1e-9);
  EXPECT_NEAR(winding_number(s.v, s.f, Eigen::Vector3d(0.3, -0.2, 0.5)), 1.0, 1e-9);
  EXPECT_NEAR(winding_number(s.v, s.f, Eigen::Vector3d(3, 1, 0)), 0.0, 1e-9);
}

// Analytic sphere distance, up to the chord error of the tessellation.
TEST(MeshDistance, SphereSignedDistance) {
  const int rings = 48, segments = 96;
  const Mesh s = sphere_mesh(rings, segments, 1.0);
  const double chord = 1.0 - std::cos(M_PI / segments);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  RowMatrix q(200, 3);
  for (Eigen::Index i = 0; i < q.rows(); ++i) q.row(i) << u(rng), u(rng), u(rng);
  const Eigen::VectorXd d = mesh_signed_distance(s.v, s.f, q);
  for (Eigen::Index i = 0; i < q.rows(); ++i) EXPECT_NEAR(d(i), q.row(i).norm() - 1.0, 2 * chord) << q.row(i);
}

// Two unit spheres 1 apart. From (0.2, 0, 0) the nearest point of the union's
// boundary is on the intersection circle x = 0.5, radius sqrt(3)/2 (ignoring
// burial it would be the origin, 0.2 away). Burial is decided per face, so
// the circle is resolved to about one face.
TEST(MeshDistance, OverlappingPartsUseTheUnionBoundary) {
  const int rings = 32, segments = 64;
  const Mesh m = merge(sphere_mesh(rings, segments, 1.0), sphere_mesh(rings, segments, 1.0, Eigen::RowVector3d(1, 0, 0)));
  const double face = 2 * M_PI / segments;
  RowMatrix q(3, 3);
  q << 0.2, 0, 0, -0.5, 0, 0, 3, 0, 0;
  const Eigen::VectorXd d = mesh_signed_distance(m.v, m.f, q);
  EXPECT_NEAR(d(0), -std::sqrt(0.3 * 0.3 + 0.75), face);
  EXPECT_NEAR(d(1), -0.5, 0.01);
  EXPECT_NEAR(d(2), 1.0, 0.01);

  const auto buried = buried_faces(m.v, m.f);
  for (std::size_t f = 0; f < m.f.size(); ++f) {
    const Face& t = m.f[f];
    const Eigen::RowVector3d c = (m.v.row(t[0]) + m.v.row(t[1]) + m.v.row(t[2])) / 3.0;
    const bool in_other = f < m.f.size() / 2 ? (c - Eigen::RowVector3d(1, 0, 0)).norm() < 1.0 : c.norm() < 1.0;
    const double to_other = (f < m.f.size() / 2 ? (c - Eigen::RowVector3d(1, 0, 0)) : c).norm();
    if (std::abs(to_other - 1.0) > 0.02) {
      EXPECT_EQ(static_cast<bool>(buried[f]), in_other) << f;
    }
  }
}

TEST(MeshDistance, FaceComponents) {
  const Mesh m = merge(sphere_mesh(4, 6, 1.0), sphere_mesh(4, 6, 1.0, Eigen::RowVector3d(5, 0, 0)));
  const auto comp = face_components(m.f, static_cast<std::size_t>(m.v.rows()));
  const std::size_t half = m.f.size() / 2;
  for (std::size_t f = 0; f < m.f.size(); ++f) EXPECT_EQ(comp[f], f < half ? 0 : 1);
}

// Toy-rig vertices lie on the surface, except the few buried where a finger
// tube enters the palm.
TEST(MeshDistance, ToyRigVerticesAreOnOrInsideTheSurface) {
  const TemplateRig rig = build_toy_rig(small_toy_rig_config());
  const Eigen::VectorXd d = mesh_signed_distance(rig.vertices, rig.faces, rig.vertices);
  EXPECT_LE(d.maxCoeff(), 1e-12);
  EXPECT_LT((d.array() < -1e-12).count(), d.size() / 20);
}
