#include "handsplat/metrics.hpp"
#include "handsplat/model.hpp"
#include "handsplat/relit.hpp"
#include "handsplat/synth.hpp"
#include "handsplat/toy_rig.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace handsplat;

namespace {

TemplateRig small_rig() { return build_toy_rig(small_toy_rig_config()); }

PoseParams random_pose(const TemplateRig& rig, std::uint64_t seed) {
  SynthConfig sc;
  sc.rig = small_toy_rig_config();
  std::mt19937_64 rng(seed);
  return sample_pose(rig, sc, rng);
}

Camera test_camera(int res = 32) {
  SynthConfig sc;
  sc.width = sc.height = res;
  return synth_camera(sc, 0);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("handsplat_model_" + name)).string();
}

}  // namespace

TEST(Model, AlbedoIsBitwiseIdenticalAcrossPoses) {
  HandModel m(small_rig());
  Tensor first;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const PoseParams pose = random_pose(m.rig, 100 + k);
    ad::Tape tape;
    ad::Var coords = tape.param(m.points.coords);
    ad::Var albedo = m.albedo_colors(tape, coords);
    ad::Var colors = m.point_colors(tape, albedo, m.normal_deformation(m.canonical_normals(), pose));
    m.render(tape, coords, colors, pose, test_camera());
    if (k == 0) first = albedo.value();
    else EXPECT_EQ(albedo.value(), first) << "pose " << k;
  }
}

TEST(Model, ZeroPoseLeavesNormalsUnchanged) {
  HandModel m(small_rig());
  const RowMatrix n = m.canonical_normals();
  const auto d = m.normal_deformation(n, PoseParams::zero(m.rig.num_joints(), m.rig.num_shape()));
  EXPECT_LT((d.points - n).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((d.template_ - m.template_normals).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, UnitNormalsFlagDegenerateRows) {
  RowMatrix g(3, 3);
  g << 3, 0, 4, 0, 0, 0, 0, -2, 0;
  std::vector<std::uint8_t> bad;
  const RowMatrix n = HandModel::unit_normals(g, &bad);
  EXPECT_DOUBLE_EQ(n(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(n(0, 2), 0.8);
  EXPECT_EQ(n.row(1).norm(), 0.0);
  EXPECT_DOUBLE_EQ(n(2, 1), -1.0);
  EXPECT_EQ(bad, (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(Model, ShadingOffGivesAlbedoColors) {
  HandModel m(small_rig());
  m.config.use_shading = false;
  ad::Tape tape;
  ad::Var coords = tape.constant(m.points.coords.value);
  ad::Var albedo = m.albedo_colors(tape, coords);
  const auto d = m.normal_deformation(m.canonical_normals(), random_pose(m.rig, 3));
  EXPECT_EQ(m.point_colors(tape, albedo, d).value(), albedo.value());
}

// The synthetic frames are generation-0 renders of the template, so the
// untrained model covers exactly the same pixels.
TEST(Model, GenerationZeroSilhouetteMatchesSyntheticMask) {
  SynthConfig sc;
  sc.rig = small_toy_rig_config();
  sc.n_frames = 2;
  sc.n_views = 2;
  sc.width = sc.height = 48;
  HandModel m(small_rig());
  for (const FrameSample& s : synthesize_frames(sc)) {
    const auto img = m.render_image(s.pose, s.camera);
    EXPECT_DOUBLE_EQ(iou(img.alpha, s.mask), 1.0) << s.name;
  }
}

TEST(Model, GenerationZeroPointsAreInsideTheTemplateSilhouette) {
  HandModel m(small_rig());
  const PoseParams pose = random_pose(m.rig, 9);
  const Camera cam = test_camera(64);
  ad::Tape tape;
  ad::Var coords = tape.constant(m.points.coords.value);
  ad::Var colors = m.albedo_colors(tape, coords);
  const auto f = m.render(tape, coords, colors, pose, cam);
  std::vector<std::uint8_t> visible(m.points.size(), 0);
  mark_visibility(splats_of(f.projected.value()), template_silhouette(m.rig, pose, cam), cam.width, cam.height, visible);
  EXPECT_EQ(std::count(visible.begin(), visible.end(), 1), static_cast<long>(m.points.size()));
}

TEST(Model, RejectsPoseForAnotherRig) {
  HandModel m(small_rig());
  PoseParams p = PoseParams::zero(m.rig.num_joints() + 1, m.rig.num_shape());
  EXPECT_THROW(m.render_image(p, test_camera()), ShapeError);
}

TEST(Model, CheckpointRoundTripRendersBitwiseIdentically) {
  HandModel m(small_rig());
  std::mt19937_64 rng(4);
  upsample(m.points, m.rig, rng);
  std::normal_distribution<double> g(0.0, 1e-3);
  for (auto* p : m.parameters())
    for (double& v : p->value.values()) v += g(rng);
  m.points.rebind(m.rig);
  m.points.visible[3] = 1;
  const std::string path = temp_path("roundtrip.hsck");
  save_model(path, m);
  const auto back = load_model(path);
  std::filesystem::remove(path);

  EXPECT_EQ(back->points.size(), m.points.size());
  EXPECT_EQ(back->points.radius, m.points.radius);
  EXPECT_EQ(back->points.radius0, m.points.radius0);
  EXPECT_EQ(back->points.generation, 1);
  EXPECT_EQ(back->points.point_generation, m.points.point_generation);
  EXPECT_EQ(back->points.visible, m.points.visible);
  const auto mp = m.parameters(), bp = back->parameters();
  ASSERT_EQ(mp.size(), bp.size());
  for (std::size_t i = 0; i < mp.size(); ++i) EXPECT_EQ(bp[i]->value, mp[i]->value) << mp[i]->name;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const PoseParams pose = random_pose(m.rig, 50 + k);
    const auto a = m.render_image(pose, test_camera());
    const auto b = back->render_image(pose, test_camera());
    EXPECT_EQ(a.rgb, b.rgb);
    EXPECT_EQ(a.alpha, b.alpha);
  }
}

TEST(Model, CheckpointMissingRecordIsNamed) {
  HandModel m(small_rig());
  TensorMap c = model_to_container(m);
  c.erase("sdf.l0.w");
  try {
    model_from_container(c);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("sdf.l0.w"), std::string::npos) << e.what();
  }
}

TEST(Model, CheckpointRejectsMismatchedShapes) {
  HandModel m(small_rig());
  TensorMap c = model_to_container(m);
  c["points.generation"] = Tensor(2, 1);
  EXPECT_THROW(model_from_container(c), std::runtime_error);
}

// The warm start fits F to the template's signed distance at offsets along
// the template normals.
TEST(Model, WarmStartFitsTheTemplateDistance) {
  HandModel m(small_rig());
  const SdfWarmStartConfig cfg;
  warm_start_sdf(m, cfg);
  const auto [x, y] = template_sdf_samples(m.rig, m.template_normals, cfg.offsets);
  const Eigen::VectorXd f = m.sdf.values(x);
  const double spacing = m.points.radius0;
  EXPECT_LT((f - y).cwiseAbs().mean(), 0.25 * spacing);
  EXPECT_LT(m.sdf.values(m.rig.vertices).cwiseAbs().mean(), 0.25 * spacing);
  EXPECT_GT(m.sdf.values(m.rig.vertices + 0.006 * m.template_normals).mean(), 0.003);
  const RowMatrix n = m.canonical_normals();
  EXPECT_GT((n.array() * m.template_normals.array()).rowwise().sum().mean(), 0.75);
}

TEST(Relit, AmbientOnlyRelightEqualsTheRenderBitwise) {
  HandModel m(small_rig());
  RelightOptions opt;
  opt.light.ka = 1.0;
  opt.light.kd = 0.0;
  opt.light.ks = 0.0;
  opt.shadows = false;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const PoseParams pose = random_pose(m.rig, 70 + k);
    const auto a = m.render_image(pose, test_camera());
    const auto b = relight_image(m, pose, test_camera(), opt);
    EXPECT_EQ(b.rgb, a.rgb);
    EXPECT_EQ(b.alpha, a.alpha);
  }
}

TEST(Relit, LightChangesTheImageButNotTheSilhouette) {
  HandModel m(small_rig());
  const PoseParams pose = random_pose(m.rig, 5);
  RelightOptions opt;
  opt.light.direction = swept_light(Eigen::Vector3d(0, 0, -1), -60);
  const auto a = relight_image(m, pose, test_camera(), opt);
  opt.light.direction = swept_light(Eigen::Vector3d(0, 0, -1), 60);
  const auto b = relight_image(m, pose, test_camera(), opt);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_GT((a.rgb.mat() - b.rgb.mat()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Relit, SweptLightTurnsAboutTheVerticalAxis) {
  const Eigen::Vector3d base = Eigen::Vector3d(0.3, 0.5, -0.8).normalized();
  for (double deg : {-90.0, -10.0, 45.0}) {
    const Eigen::Vector3d l = swept_light(base, deg);
    EXPECT_NEAR(l.norm(), 1.0, 1e-12);
    EXPECT_NEAR(l.y(), base.y(), 1e-12);
    const double horizontal = base.x() * base.x() + base.z() * base.z();
    EXPECT_NEAR(std::acos((l.x() * base.x() + l.z() * base.z()) / horizontal), std::abs(deg) * M_PI / 180.0, 1e-9);
  }
}
