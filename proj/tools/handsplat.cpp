// handsplat command-line tool. Exit codes: 0 success, 1 runtime error, 2 usage error.

#include "handsplat/bench.hpp"
#include "handsplat/gradcheck_suites.hpp"
#include "handsplat/io/ply.hpp"
#include "handsplat/relit.hpp"
#include "handsplat/synth.hpp"
#include "handsplat/train.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <Eigen/Geometry>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace handsplat;

namespace {

void save_rgb(const std::string& path, const Tensor& rgb, const Camera& cam) {
  if (const fs::path dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  io::save_png(path, rgb, cam.width, cam.height);
}

/// Linear in theta, phi and translation; slerp for the global rotation.
PoseParams interpolate(const PoseParams& a, const PoseParams& b, double t) {
  if (a.theta.rows() != b.theta.rows() || a.phi.size() != b.phi.size())
    throw std::runtime_error("animate: the two poses belong to different rigs");
  PoseParams p;
  p.theta = (1 - t) * a.theta + t * b.theta;
  p.phi = (1 - t) * a.phi + t * b.phi;
  p.global_rotation = Eigen::Quaterniond(a.global_rotation).slerp(t, Eigen::Quaterniond(b.global_rotation)).toRotationMatrix();
  p.global_translation = (1 - t) * a.global_translation + t * b.global_translation;
  return p;
}

std::unique_ptr<HandModel> open_checkpoint(const std::string& path) { return load_model(path); }

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int frames = 20, views = 4, res = 128;
  std::uint64_t seed = 1;
  bool small = false;
};

int run_synth(const SynthArgs& a) {
  SynthConfig c;
  if (a.small) c.rig = small_toy_rig_config();
  c.n_frames = a.frames;
  c.n_views = a.views;
  c.width = c.height = a.res;
  c.seed = a.seed;
  fmt::print("{}\n", generate_synthetic_dataset(a.out, c));
  return 0;
}

struct TrainArgs {
  std::string data, config, out, rig, log;
  int epochs = 0;
  std::uint64_t seed = 0;
  bool seed_set = false, verbose = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = train_config_from_json(io::read_json(a.config));
  if (a.epochs > 0) {
    cfg.epochs = a.epochs;
    cfg.geometry_freeze_epoch = std::min(cfg.geometry_freeze_epoch, a.epochs);
  }
  if (a.seed_set) cfg.seed = a.seed;
  if (!a.log.empty()) cfg.log_path = a.log;
  cfg.checkpoint_path = a.out;
  cfg.verbose = cfg.verbose || a.verbose;

  std::string rig_path = a.rig;
  if (rig_path.empty()) {
    const fs::path beside = fs::path(a.data).parent_path() / "rig.hsrig";
    if (fs::exists(beside)) rig_path = beside.string();
  }
  HandModel m(rig_path.empty() ? build_toy_rig(ToyRigConfig{}) : load_rig(rig_path));
  const auto data = io::load_dataset(a.data);
  const TrainResult r = train(m, data, cfg);
  fmt::print("steps {}  points {}  val psnr {:.2f} ssim {:.4f} iou {:.4f}  {:.1f}s\n", r.steps, r.points, r.val.psnr,
             r.val.ssim, r.val.iou, r.seconds);
  fmt::print("checkpoint {}\n", a.out);
  return 0;
}

struct RenderArgs {
  std::string checkpoint, pose, camera, out, alpha_out;
};

int run_render(const RenderArgs& a) {
  auto m = open_checkpoint(a.checkpoint);
  const Camera cam = io::load_camera(a.camera);
  const auto img = m->render_image(io::load_pose(a.pose), cam);
  save_rgb(a.out, img.rgb, cam);
  if (!a.alpha_out.empty()) save_rgb(a.alpha_out, img.alpha, cam);
  return 0;
}

struct AnimateArgs {
  std::string checkpoint, from, to, camera, out_dir;
  int frames = 10;
};

int run_animate(const AnimateArgs& a) {
  if (a.frames < 2) throw CLI::ValidationError("--frames", "need at least 2 frames");
  auto m = open_checkpoint(a.checkpoint);
  const Camera cam = io::load_camera(a.camera);
  const PoseParams p0 = io::load_pose(a.from), p1 = io::load_pose(a.to);
  for (int k = 0; k < a.frames; ++k) {
    const double t = static_cast<double>(k) / (a.frames - 1);
    const auto img = m->render_image(interpolate(p0, p1, t), cam);
    save_rgb((fs::path(a.out_dir) / fmt::format("frame_{:03d}.png", k)).string(), img.rgb, cam);
  }
  fmt::print("{} frames in {}\n", a.frames, a.out_dir);
  return 0;
}

struct RelightArgs {
  std::string checkpoint, pose, camera, out_dir;
  int steps = 7;
  double sweep = 120.0;  // degrees, centered on the base direction
  std::vector<double> direction{0.0, 0.0, -1.0};
  double ka = 0.3, kd = 0.7, ks = 0.1, shininess = 16.0;
  bool no_shadows = false;
};

int run_relight(const RelightArgs& a) {
  if (a.steps < 1) throw CLI::ValidationError("--steps", "need at least 1 step");
  auto m = open_checkpoint(a.checkpoint);
  const Camera cam = io::load_camera(a.camera);
  const PoseParams pose = io::load_pose(a.pose);
  const Eigen::Vector3d base(a.direction[0], a.direction[1], a.direction[2]);
  if (!(base.norm() > 0)) throw std::runtime_error("light direction must be nonzero");
  RelightOptions opt;
  opt.light.ka = a.ka;
  opt.light.kd = a.kd;
  opt.light.ks = a.ks;
  opt.light.shininess = a.shininess;
  opt.shadows = !a.no_shadows;
  for (int k = 0; k < a.steps; ++k) {
    const double deg = a.steps == 1 ? 0.0 : -a.sweep / 2 + a.sweep * k / (a.steps - 1);
    opt.light.direction = swept_light(base, deg);
    const auto img = relight_image(*m, pose, cam, opt);
    save_rgb((fs::path(a.out_dir) / fmt::format("relight_{:03d}.png", k)).string(), img.rgb, cam);
  }
  fmt::print("{} relit frames in {}\n", a.steps, a.out_dir);
  return 0;
}

struct BenchArgs {
  std::size_t points = 100000;
  int res = 256, frames = 10;
  std::vector<int> threads{1};
  bool single = false, no_header = false;
  std::uint64_t seed = 0;
};

int run_bench_cmd(const BenchArgs& a) {
  if (!a.no_header) fmt::print("{}\n", bench_csv_header());
  for (int t : a.threads) {
    BenchConfig c;
    c.points = a.points;
    c.resolution = a.res;
    c.frames = a.frames;
    c.threads = t;
    c.single_precision = a.single;
    c.seed = a.seed;
    fmt::print("{}\n", bench_csv_row(run_bench(c)));
    std::fflush(stdout);
  }
  return 0;
}

int run_gradcheck() {
  bool ok = true;
  for (const SuiteResult& s : run_gradcheck_suites()) {
    fmt::print("{:<16} max rel error {:.3e}  threshold {:.0e}  checks {:>5}  {}\n", s.name, s.max_error, s.threshold,
               s.checks, s.passed() ? "ok" : "FAIL");
    ok = ok && s.passed();
  }
  return ok ? 0 : 1;
}

struct ExportArgs {
  std::string checkpoint, out;
};

int run_export(const ExportArgs& a) {
  auto m = open_checkpoint(a.checkpoint);
  io::PlyPoints p;
  p.positions = m->points.positions();
  p.normals = m->canonical_normals();
  p.albedo = m->albedo_values();
  p.generation = m->points.point_generation;
  p.visible = m->points.visible;
  io::save_ply(a.out, p);
  fmt::print("{} points to {}\n", p.positions.rows(), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"handsplat: deformable point-splatting hand renderer"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic multi-view dataset of the toy rig");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--frames", synth.frames, "Poses")->check(CLI::PositiveNumber);
  s->add_option("--views", synth.views, "Cameras per pose")->check(CLI::PositiveNumber);
  s->add_option("--res", synth.res, "Image width and height")->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "Pose sampling seed");
  s->add_flag("--small-rig", synth.small, "Use the small toy rig");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a dataset manifest");
  t->add_option("--data", tr.data, "Dataset manifest.json")->required()->check(CLI::ExistingFile);
  t->add_option("--config", tr.config, "Training config JSON")->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Checkpoint to write")->required();
  t->add_option("--rig", tr.rig, "Template rig (default: rig.hsrig beside the manifest, else the toy rig)");
  t->add_option("--log", tr.log, "CSV metrics log");
  t->add_option("--epochs", tr.epochs, "Override the configured epoch count")->check(CLI::PositiveNumber);
  auto* seed_opt = t->add_option("--seed", tr.seed, "Override the configured seed");
  t->add_flag("--verbose", tr.verbose, "Print one line per epoch");

  RenderArgs rd;
  auto* r = app.add_subcommand("render", "Render a checkpoint under a pose and camera");
  r->add_option("--checkpoint", rd.checkpoint)->required()->check(CLI::ExistingFile);
  r->add_option("--pose", rd.pose)->required()->check(CLI::ExistingFile);
  r->add_option("--camera", rd.camera)->required()->check(CLI::ExistingFile);
  r->add_option("--out", rd.out, "Output PNG")->required();
  r->add_option("--alpha-out", rd.alpha_out, "Optional accumulated-alpha PNG");
  std::uint64_t unused_seed = 0;
  r->add_option("--seed", unused_seed, "Accepted for uniformity; rendering is deterministic");

  AnimateArgs an;
  auto* n = app.add_subcommand("animate", "Render frames interpolating between two poses");
  n->add_option("--checkpoint", an.checkpoint)->required()->check(CLI::ExistingFile);
  n->add_option("--from", an.from, "Start pose")->required()->check(CLI::ExistingFile);
  n->add_option("--to", an.to, "End pose")->required()->check(CLI::ExistingFile);
  n->add_option("--camera", an.camera)->required()->check(CLI::ExistingFile);
  n->add_option("--out-dir", an.out_dir)->required();
  n->add_option("--frames", an.frames, "Frames including both ends");
  n->add_option("--seed", unused_seed, "Accepted for uniformity; rendering is deterministic");

  RelightArgs rl;
  auto* l = app.add_subcommand("relight", "Sweep a Phong light horizontally around a posed model");
  l->add_option("--checkpoint", rl.checkpoint)->required()->check(CLI::ExistingFile);
  l->add_option("--pose", rl.pose)->required()->check(CLI::ExistingFile);
  l->add_option("--camera", rl.camera)->required()->check(CLI::ExistingFile);
  l->add_option("--out-dir", rl.out_dir)->required();
  l->add_option("--steps", rl.steps, "Light positions");
  l->add_option("--sweep", rl.sweep, "Total azimuth sweep in degrees");
  l->add_option("--light", rl.direction, "Base direction toward the light, x y z")->expected(3);
  l->add_option("--ka", rl.ka, "Ambient coefficient");
  l->add_option("--kd", rl.kd, "Diffuse coefficient");
  l->add_option("--ks", rl.ks, "Specular coefficient");
  l->add_option("--shininess", rl.shininess, "Specular exponent");
  l->add_flag("--no-shadows", rl.no_shadows, "Disable the ray-cast self-shadow");
  l->add_option("--seed", unused_seed, "Accepted for uniformity; relighting is deterministic");

  BenchArgs bn;
  auto* b = app.add_subcommand("bench", "Time forward renders of a synthetic cloud; prints CSV");
  b->add_option("--points", bn.points)->check(CLI::PositiveNumber);
  b->add_option("--res", bn.res)->check(CLI::PositiveNumber);
  b->add_option("--frames", bn.frames, "Timed frames")->check(CLI::PositiveNumber);
  b->add_option("--threads", bn.threads, "Thread counts, one row each")->check(CLI::PositiveNumber);
  b->add_flag("--float", bn.single, "Single-precision rasterization");
  b->add_flag("--no-header", bn.no_header, "Omit the CSV header");
  b->add_option("--seed", bn.seed, "Cloud sampling seed");

  auto* g = app.add_subcommand("gradcheck", "Run the finite-difference gradient suites");
  g->add_option("--seed", unused_seed, "Accepted for uniformity; the suites use fixed seeds");

  ExportArgs ex;
  auto* e = app.add_subcommand("export-ply", "Write the canonical point cloud as PLY");
  e->add_option("--checkpoint", ex.checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--out", ex.out, "Output PLY")->required();
  e->add_option("--seed", unused_seed, "Accepted for uniformity; export is deterministic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }
  tr.seed_set = seed_opt->count() > 0;

  try {
    if (*s) return run_synth(synth);
    if (*t) return run_train(tr);
    if (*r) return run_render(rd);
    if (*n) return run_animate(an);
    if (*l) return run_relight(rl);
    if (*b) return run_bench_cmd(bn);
    if (*g) return run_gradcheck();
    if (*e) return run_export(ex);
  } catch (const CLI::ValidationError& err) {
    std::cerr << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 2;
}
