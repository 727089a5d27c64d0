#include "handsplat/synth.hpp"
#include "handsplat/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace handsplat;

namespace {

std::vector<FrameSample> toy_frames(int poses, int views, int res, bool with_val = false) {
  SynthConfig sc;
  sc.rig = small_toy_rig_config();
  sc.n_frames = poses;
  sc.n_views = views;
  sc.width = sc.height = res;
  sc.seed = 5;
  auto frames = synthesize_frames(sc);
  if (!with_val)
    for (auto& f : frames) f.split = "train";
  return frames;
}

std::unique_ptr<HandModel> small_model() { return std::make_unique<HandModel>(build_toy_rig(small_toy_rig_config())); }

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 1;
  c.geometry_freeze_epoch = 1;
  c.batch_size = 2;
  c.learning_rate = 1e-4;
  c.appearance_learning_rate = 1e-3;
  c.sdf_warmup_steps = 0;
  c.reg_samples = 0;
  c.seed = 3;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("handsplat_train_" + name)).string();
}

}  // namespace

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c;
  c.epochs = 12;
  c.learning_rate = 3e-4;
  c.appearance_learning_rate = 2e-3;
  c.batch_size = 5;
  c.upsample_every = 3;
  c.geometry_freeze_epoch = 7;
  c.seed = 99;
  c.width = c.height = 64;
  c.prune = false;
  c.reg_samples = 17;
  c.eval_every = 2;
  c.log_path = "a.csv";
  c.weights.lambda_vgg = 0.25;
  c.weights.lambda_eik = 0.5;
  const TrainConfig d = train_config_from_json(train_config_to_json(c));
  EXPECT_EQ(train_config_to_json(d), train_config_to_json(c));
  EXPECT_EQ(d.weights.lambda_vgg, 0.25);
  EXPECT_EQ(d.geometry_freeze_epoch, 7);
}

TEST(TrainConfig, KeysMirrorFieldNames) {
  const auto c = train_config_from_json(nlohmann::json::parse(R"({"epochs": 4, "geometry_freeze_epoch": 2,
      "lambda_mask": 0.5, "weights": {"lambda_rgb": 2.0}})"));
  EXPECT_EQ(c.epochs, 4);
  EXPECT_EQ(c.weights.lambda_mask, 0.5);
  EXPECT_EQ(c.weights.lambda_rgb, 2.0);
  EXPECT_EQ(c.batch_size, 16);
}

TEST(TrainConfig, UnknownKeyIsNamed) {
  try {
    train_config_from_json(nlohmann::json::parse(R"({"epoch": 3})"));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("'epoch'"), std::string::npos);
  }
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"weights": {"lambda_foo": 1}})")),
               std::invalid_argument);
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  auto bad = [](auto edit) {
    TrainConfig c;
    edit(c);
    EXPECT_THROW(c.validate(), std::invalid_argument);
  };
  bad([](TrainConfig& c) { c.epochs = 0; });
  bad([](TrainConfig& c) { c.geometry_freeze_epoch = c.epochs + 1; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.learning_rate = -1.0; });
  bad([](TrainConfig& c) { c.upsample_every = 0; });
  bad([](TrainConfig& c) { c.prune_max_fraction = 0.0; });
  bad([](TrainConfig& c) { c.weights.lambda_rgb = -1.0; });
  TrainConfig ok;
  EXPECT_NO_THROW(ok.validate());
}

TEST(Batching, EveryFrameOnceAndPoseGroupsTogether) {
  const auto data = toy_frames(5, 3, 16);
  std::vector<std::size_t> frames(data.size());
  std::iota(frames.begin(), frames.end(), std::size_t{0});
  std::mt19937_64 rng(1);
  const auto batches = make_batches(data, frames, 3, rng);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    EXPECT_LE(b.size(), 3u);
    // Batch size equals the views per pose, so each batch is one pose.
    for (std::size_t i : b) EXPECT_EQ(data[i].pose_key, data[b[0]].pose_key);
    seen.insert(b.begin(), b.end());
  }
  EXPECT_EQ(seen, std::multiset<std::size_t>(frames.begin(), frames.end()));
}

TEST(Batching, RandomSubsetIsSortedAndDistinct) {
  std::mt19937_64 rng(2);
  const auto s = random_subset(100, 10, rng);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 10u);
  EXPECT_EQ(random_subset(5, 0, rng).size(), 5u);
}

TEST(Training, BatchLossIsMeanOfFrameLosses) {
  const auto data = toy_frames(2, 2, 24);
  auto m = small_model();
  Trainer t(*m, data, quick_config());
  t.begin_epoch(1);
  const LossParts all = t.loss({0, 1, 2, 3});
  double mean = 0.0;
  for (std::size_t i = 0; i < 4; ++i) mean += t.loss({i}).total / 4.0;
  EXPECT_NEAR(all.total, mean, 1e-9);
  EXPECT_GT(all.reg, 0.0);
}

TEST(Training, LossDecreasesOnTwoFrames) {
  const auto data = toy_frames(1, 2, 32);
  auto m = small_model();
  Trainer t(*m, data, quick_config());
  t.begin_epoch(1);
  std::vector<double> losses;
  for (int s = 0; s < 51; ++s) losses.push_back(t.step({0, 1}).total);
  int decreasing = 0;
  for (std::size_t s = 1; s < losses.size(); ++s) decreasing += losses[s] < losses[s - 1];
  EXPECT_GE(decreasing, 45) << "first " << losses.front() << " last " << losses.back();
}

TEST(Training, ScheduleGivesExactPointCountAndRadius) {
  const auto data = toy_frames(1, 1, 16);
  auto m = small_model();
  const std::size_t n_m = m->points.size();
  const double r0 = m->points.radius0;
  TrainConfig c = quick_config();
  c.epochs = 40;
  c.geometry_freeze_epoch = 35;
  c.prune = false;
  Trainer t(*m, data, c);
  int events = 0;
  for (int e = 1; e <= c.epochs; ++e) {
    const std::size_t before = m->points.size();
    t.begin_epoch(e);
    events += m->points.size() != before;
    t.end_epoch();
  }
  EXPECT_EQ(events, 7);
  EXPECT_EQ(m->points.size(), n_m * 128);
  EXPECT_EQ(m->points.generation, 7);
  EXPECT_NEAR(m->points.radius, r0 * std::pow(1.0 / std::sqrt(2.0), 7), 1e-15 * r0);
}

TEST(Training, PlantedFarPointIsPrunedInOneEpoch) {
  const auto data = toy_frames(2, 2, 32);
  auto m = small_model();
  auto& p = m->points;
  const std::size_t n = p.size();
  Tensor coords(n + 1, 3);
  std::copy_n(p.coords.value.data(), 3 * n, coords.data());
  coords(n, 0) = 0.5;
  coords(n, 1) = 0.5;
  coords(n, 2) = 0.5;
  p.coords.value = coords;
  p.point_generation.push_back(1);
  p.visible.push_back(0);
  p.rebind(m->rig);
  Trainer t(*m, data, quick_config());
  t.begin_epoch(1);
  for (const auto& b : t.epoch_batches()) t.step(b);
  t.end_epoch();
  ASSERT_EQ(p.size(), n);
  EXPECT_EQ(std::count(p.point_generation.begin(), p.point_generation.end(), 1), 0);
  EXPECT_LT(p.coords.value.mat().rowwise().norm().maxCoeff(), 0.3);
}

TEST(Training, GeometryIsBitIdenticalAfterFreeze) {
  const auto data = toy_frames(2, 2, 24);
  auto m = small_model();
  TrainConfig c = quick_config();
  c.epochs = 3;
  c.geometry_freeze_epoch = 1;
  Trainer t(*m, data, c);
  t.begin_epoch(1);
  for (const auto& b : t.epoch_batches()) t.step(b);
  t.end_epoch();
  const Tensor coords = m->points.coords.value;
  std::vector<Tensor> sdf;
  for (auto* q : m->sdf.parameters()) sdf.push_back(q->value);
  const Tensor albedo = m->albedo.parameters()[0]->value;
  for (int e = 2; e <= 3; ++e) {
    t.begin_epoch(e);
    for (const auto& b : t.epoch_batches()) t.step(b);
    t.end_epoch();
  }
  EXPECT_EQ(m->points.coords.value, coords);
  const auto now = m->sdf.parameters();
  for (std::size_t i = 0; i < now.size(); ++i) EXPECT_EQ(now[i]->value, sdf[i]) << now[i]->name;
  EXPECT_NE(m->albedo.parameters()[0]->value, albedo);
}

TEST(Training, SameSeedGivesIdenticalLogs) {
  const auto data = toy_frames(2, 3, 24, true);
  auto run = [&](const std::string& log) {
    auto m = small_model();
    TrainConfig c = quick_config();
    c.epochs = 2;
    c.upsample_every = 1;
    c.geometry_freeze_epoch = 1;
    c.reg_samples = 50;
    c.log_path = log;
    return train(*m, data, c);
  };
  const std::string la = temp_path("a.csv"), lb = temp_path("b.csv");
  const TrainResult a = run(la), b = run(lb);
  ASSERT_EQ(a.log.size(), b.log.size());
  ASSERT_FALSE(a.log.empty());
  EXPECT_EQ(a.log.back().kind, "eval");
  // Every column but ms_per_frame, which is wall-clock time.
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    LogRow x = a.log[i], y = b.log[i];
    x.ms_per_frame = y.ms_per_frame = 0.0;
    EXPECT_EQ(log_line(x, {}), log_line(y, {})) << "row " << i;
  }
  std::ifstream fa(la), fb(lb);
  std::string ha, hb;
  std::getline(fa, ha);
  std::getline(fb, hb);
  EXPECT_EQ(ha, log_header());
  std::size_t rows = 0;
  for (std::string line; std::getline(fa, line);) ++rows;
  EXPECT_EQ(rows, a.log.size());
  std::filesystem::remove(la);
  std::filesystem::remove(lb);
}

TEST(Training, CheckpointIsWrittenAndReloads) {
  const auto data = toy_frames(1, 2, 24);
  auto m = small_model();
  TrainConfig c = quick_config();
  c.checkpoint_path = temp_path("model.hsck");
  train(*m, data, c);
  const auto back = load_model(c.checkpoint_path);
  const auto a = m->render_image(data[0].pose, data[0].camera);
  const auto b = back->render_image(data[0].pose, data[0].camera);
  EXPECT_EQ(a.rgb, b.rgb);
  std::filesystem::remove(c.checkpoint_path);
}

TEST(Training, NonFiniteLossAbortsWithLastGoodCheckpoint) {
  auto data = toy_frames(1, 2, 24);
  data[1].mask[7] = std::nan("");
  auto m = small_model();
  TrainConfig c = quick_config();
  c.checkpoint_path = temp_path("broken.hsck");
  std::filesystem::remove(c.checkpoint_path + ".last_good");
  EXPECT_THROW(train(*m, data, c), TrainingError);
  EXPECT_TRUE(std::filesystem::exists(c.checkpoint_path + ".last_good"));
  EXPECT_NO_THROW(load_model(c.checkpoint_path + ".last_good"));
  std::filesystem::remove(c.checkpoint_path + ".last_good");
}

TEST(Training, RejectsDatasetWithoutTrainingFrames) {
  auto data = toy_frames(1, 1, 16);
  data[0].split = "val";
  auto m = small_model();
  EXPECT_THROW(Trainer(*m, data, quick_config()), std::invalid_argument);
}

TEST(Training, RejectsResolutionMismatch) {
  const auto data = toy_frames(1, 1, 16);
  auto m = small_model();
  TrainConfig c = quick_config();
  c.width = c.height = 32;
  EXPECT_THROW(Trainer(*m, data, c), std::invalid_argument);
}
