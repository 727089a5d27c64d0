#include "handsplat/io/files.hpp"
#include "handsplat/io/image.hpp"
#include "handsplat/synth.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace handsplat;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("handsplat_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Tensor random_image(std::size_t pixels, std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(pixels, channels);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

SynthConfig tiny_synth() {
  SynthConfig cfg;
  cfg.rig = small_toy_rig_config();
  cfg.n_frames = 2;
  cfg.n_views = 2;
  cfg.width = cfg.height = 32;
  return cfg;
}

}  // namespace

TEST(Png, RoundTripWithinOneLevel) {
  const std::string dir = scratch("png");
  for (std::size_t c : {1u, 3u, 4u}) {
    const Tensor img = random_image(7 * 5, c, c);
    const std::string path = dir + fmt::format("/img{}.png", c);
    io::save_png(path, img, 7, 5);
    const io::Image back = io::load_png(path);
    ASSERT_EQ(back.width, 7);
    ASSERT_EQ(back.height, 5);
    ASSERT_EQ(back.channels(), static_cast<int>(c));
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(std::abs(back.pixels[i] - img[i]), 0.5 / 255.0 + 1e-12);
  }
}

TEST(Png, ClampsOutOfRange) {
  const std::string path = scratch("clamp") + "/c.png";
  Tensor img(2, 1);
  img[0] = -3.0;
  img[1] = 7.0;
  io::save_png(path, img, 2, 1);
  const io::Image back = io::load_png(path);
  EXPECT_EQ(back.pixels[0], 0.0);
  EXPECT_EQ(back.pixels[1], 1.0);
}

TEST(Png, Errors) {
  const std::string dir = scratch("pngerr");
  EXPECT_THROW(io::load_png(dir + "/missing.png"), io::ImageError);
  std::ofstream(dir + "/junk.png") << "not a png";
  EXPECT_THROW(io::load_png(dir + "/junk.png"), io::ImageError);
  EXPECT_THROW(io::save_png(dir + "/bad.png", Tensor(5, 3), 2, 2), ShapeError);
  EXPECT_THROW(io::save_png(dir + "/bad.png", Tensor(4, 2), 2, 2), ShapeError);
}

TEST(Npy, RoundTripIsFloat32Exact) {
  const std::string dir = scratch("npy");
  for (std::size_t c : {1u, 3u}) {
    const Tensor img = random_image(6 * 4, c, 10 + c);
    const std::string path = dir + fmt::format("/a{}.npy", c);
    io::save_npy(path, img, 6, 4);
    const io::Image back = io::load_npy(path);
    EXPECT_EQ(back.width, 6);
    EXPECT_EQ(back.height, 4);
    ASSERT_EQ(back.pixels.shape(), img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back.pixels[i], static_cast<double>(static_cast<float>(img[i])));
  }
}

TEST(Npy, HeaderIsNumpyVersion1) {
  const std::string path = scratch("npyhdr") + "/h.npy";
  io::save_npy(path, Tensor(6, 3), 3, 2);
  const std::string bytes = slurp(path);
  EXPECT_EQ(bytes.substr(0, 8), std::string("\x93NUMPY\x01\x00", 8));
  const std::size_t len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
  EXPECT_EQ((10 + len) % 64, 0u);
  EXPECT_NE(bytes.find("'shape': (2, 3, 3)"), std::string::npos);
  EXPECT_EQ(bytes.size(), 10 + len + 6 * 3 * 4);
}

TEST(Files, CameraAndPoseRoundTrip) {
  const std::string dir = scratch("files");
  const Camera cam = look_at({0.1, 0.2, -0.5}, {0, 0.05, 0}, {0, 1, 0}, 150.0, 64, 48);
  io::save_camera(dir + "/cam.json", cam);
  const Camera c2 = io::load_camera(dir + "/cam.json");
  EXPECT_EQ(c2.fx, cam.fx);
  EXPECT_EQ(c2.cy, cam.cy);
  EXPECT_EQ(c2.R, cam.R);
  EXPECT_EQ(c2.t, cam.t);
  EXPECT_EQ(c2.width, 64);
  EXPECT_EQ(c2.height, 48);

  PoseParams p = PoseParams::zero(4, 3);
  p.theta(2, 1) = 0.25;
  p.phi << 0.1, -0.2, 0.3;
  p.global_rotation = ad::rodrigues(Eigen::Vector3d(0.1, 0.2, 0.3));
  p.global_translation << 1, 2, 3;
  io::save_pose(dir + "/pose.json", p);
  const PoseParams q = io::load_pose(dir + "/pose.json");
  EXPECT_EQ(q.theta, p.theta);
  EXPECT_EQ(q.phi, p.phi);
  EXPECT_EQ(q.global_rotation, p.global_rotation);
  EXPECT_EQ(q.global_translation, p.global_translation);
}

TEST(Files, PoseAcceptsAxisAngleGlobalRotation) {
  const io::json j = {{"theta", {{0, 0, 0}}}, {"phi", io::json::array()}, {"global_rotation", {0.0, 0.0, M_PI / 2}}};
  const PoseParams p = io::pose_from_json(j);
  EXPECT_TRUE(p.global_rotation.isApprox(ad::rodrigues(Eigen::Vector3d(0, 0, M_PI / 2)), 1e-15));
  EXPECT_EQ(p.global_translation, Eigen::Vector3d::Zero());
}

TEST(Files, CameraValidation) {
  io::json j = io::camera_to_json(look_at({0, 0, -1}, {0, 0, 0}, {0, 1, 0}, 100, 16, 16));
  j["fx"] = -1.0;
  EXPECT_THROW(io::camera_from_json(j), std::invalid_argument);
}

TEST(Synth, ManifestShapeAndSplits) {
  const std::string dir = scratch("synth");
  SynthConfig cfg = tiny_synth();
  cfg.n_frames = 3;
  cfg.n_views = 4;
  const std::string manifest = generate_synthetic_dataset(dir, cfg);
  const io::DatasetManifest m = io::load_manifest(manifest);
  ASSERT_EQ(m.frames.size(), 12u);
  int val = 0;
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    // Pose-major ordering; view 2 is held out.
    EXPECT_EQ(m.frames[i].pose, fmt::format("poses/frame_{:03d}.json", i / 4));
    EXPECT_EQ(m.frames[i].camera, fmt::format("cameras/view_{:02d}.json", i % 4));
    EXPECT_EQ(m.frames[i].split, i % 4 == 2 ? "val" : "train");
    val += m.frames[i].split == "val";
  }
  EXPECT_EQ(val, 3);
}

TEST(Synth, DefaultSizeGivesEightyRecords) {
  // Manifest only: the full default render is exercised by the overfit suite.
  SynthConfig cfg;
  cfg.rig = small_toy_rig_config();
  cfg.width = cfg.height = 16;
  const std::string manifest = generate_synthetic_dataset(scratch("synth80"), cfg);
  EXPECT_EQ(io::load_manifest(manifest).frames.size(), 80u);
}

TEST(Synth, SameSeedIsByteIdentical) {
  const SynthConfig cfg = tiny_synth();
  const std::string a = scratch("seed_a"), b = scratch("seed_b");
  generate_synthetic_dataset(a, cfg);
  generate_synthetic_dataset(b, cfg);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path().string()), slurp((fs::path(b) / rel).string())) << rel;
    ++files;
  }
  EXPECT_EQ(files, 2u * 2 * 2 + 2 + 2 + 2);  // images and masks, cameras, poses, rig and manifest
  SynthConfig other = cfg;
  other.seed = 2;
  const std::string c = scratch("seed_c");
  generate_synthetic_dataset(c, other);
  EXPECT_NE(slurp(a + "/poses/frame_000.json"), slurp(c + "/poses/frame_000.json"));
}

TEST(Synth, MaskIsAlphaAboveHalf) {
  const SynthConfig cfg = tiny_synth();
  const TemplateRig rig = build_toy_rig(cfg.rig);
  std::mt19937_64 rng(cfg.seed);
  const PoseParams pose = sample_pose(rig, cfg, rng);
  const SynthFrame f =
      render_template_frame(rig, procedural_albedo(rig), pose, synth_camera(cfg, 0), cfg.light, median_nn_distance(rig.vertices));
  double fg = 0.0;
  for (std::size_t p = 0; p < f.alpha.size(); ++p) {
    EXPECT_EQ(f.mask[p], f.alpha[p] > 0.5 ? 1.0 : 0.0);
    fg += f.mask[p];
  }
  EXPECT_GT(fg, 20.0);
  EXPECT_LT(fg, 0.8 * 32 * 32);
}

TEST(Synth, FramesMatchDirectRender) {
  const std::string dir = scratch("direct");
  const SynthConfig cfg = tiny_synth();
  const auto samples = io::load_dataset(generate_synthetic_dataset(dir, cfg));
  ASSERT_EQ(samples.size(), 4u);
  const TemplateRig rig = build_toy_rig(cfg.rig);
  for (const FrameSample& s : samples) {
    const SynthFrame f = render_template_frame(rig, procedural_albedo(rig), s.pose, s.camera, cfg.light,
                                               median_nn_distance(rig.vertices));
    // Pose and camera survive the JSON round trip exactly, so the only error is
    // 8-bit quantization.
    for (std::size_t i = 0; i < f.rgb.size(); ++i) EXPECT_LE(std::abs(s.rgb[i] - f.rgb[i]), 0.5 / 255.0 + 1e-9);
    for (std::size_t i = 0; i < f.mask.size(); ++i) EXPECT_EQ(s.mask[i], f.mask[i]);
  }
  EXPECT_EQ(samples[0].pose_key, samples[1].pose_key);
  EXPECT_NE(samples[0].pose_key, samples[2].pose_key);
}

TEST(Synth, CamerasLookAtTheHand) {
  const SynthConfig cfg = tiny_synth();
  for (int v = 0; v < 4; ++v) {
    SynthConfig c = cfg;
    c.n_views = 4;
    const Camera cam = synth_camera(c, v);
    const Eigen::Vector3d p = cam.to_camera(Eigen::Vector3d(0, 0.08, 0));
    EXPECT_NEAR(p.x(), 0.0, 1e-12);
    EXPECT_NEAR(p.y(), 0.0, 1e-12);
    EXPECT_NEAR(p.z(), cfg.distance, 1e-12);
  }
}

TEST(Dataset, ShapesAndBinarizedMasks) {
  const std::string dir = scratch("ds");
  const SynthConfig cfg = tiny_synth();
  const auto samples = io::load_dataset(generate_synthetic_dataset(dir, cfg));
  ASSERT_EQ(samples.size(), 4u);
  for (const auto& s : samples) {
    EXPECT_EQ(s.rgb.shape(), (Shape{32 * 32, 3}));
    EXPECT_EQ(s.mask.shape(), (Shape{32 * 32, 1}));
    for (double m : s.mask.values()) EXPECT_TRUE(m == 0.0 || m == 1.0);
    EXPECT_EQ(s.width(), 32);
  }
}

TEST(Dataset, MissingMaskNamesTheFrame) {
  const std::string dir = scratch("missing");
  const std::string manifest = generate_synthetic_dataset(dir, tiny_synth());
  fs::remove(fs::path(dir) / "masks/frame_000_view_01.png");
  try {
    io::load_dataset(manifest);
    FAIL() << "expected DatasetError";
  } catch (const io::DatasetError& e) {
    EXPECT_STREQ(e.what(), "frame 1: mask not found");
  }
}

TEST(Dataset, ResolutionMismatchWithinSplit) {
  const std::string dir = scratch("mismatch");
  const std::string manifest = generate_synthetic_dataset(dir, tiny_synth());
  // Replace frame 2 (train) with a 16x16 image and camera.
  io::save_png(dir + "/images/frame_001_view_00.png", Tensor(16 * 16, 3), 16, 16);
  io::save_png(dir + "/masks/frame_001_view_00.png", Tensor(16 * 16, 1), 16, 16);
  io::save_camera(dir + "/cameras/small.json", look_at({0, 0, -1}, {0, 0, 0}, {0, 1, 0}, 20, 16, 16));
  io::DatasetManifest m = io::load_manifest(manifest);
  m.frames[2].camera = "cameras/small.json";
  io::save_manifest(manifest, m);
  EXPECT_THROW(io::load_dataset(manifest), io::DatasetError);
}

TEST(Dataset, ImageCameraSizeDisagreement) {
  const std::string dir = scratch("camsize");
  const std::string manifest = generate_synthetic_dataset(dir, tiny_synth());
  io::save_camera(dir + "/cameras/view_00.json", look_at({0, 0, -1}, {0, 0, 0}, {0, 1, 0}, 20, 16, 16));
  EXPECT_THROW(io::load_dataset(manifest), io::DatasetError);
}
