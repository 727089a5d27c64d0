#pragma once

// Camera, pose and manifest files (JSON) and dataset loading.
//
// camera: {"fx", "fy", "cx", "cy", "R": 3x3 rows, "t": [3], "width", "height"}
// pose:   {"theta": N_j x 3 axis-angle rows, "phi": [S],
//          "global_rotation": 3x3 rows or axis-angle [3], "global_translation": [3]}
// manifest: {"frames": [{"image", "mask", "camera", "pose", "split"}]}, paths
//          relative to the manifest's directory unless absolute.

#include "handsplat/camera.hpp"
#include "handsplat/geom_ops.hpp"
#include "handsplat/io/image.hpp"
#include "handsplat/rig.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <map>

namespace handsplat::io {

using nlohmann::json;
namespace fs = std::filesystem;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(fmt::format("cannot open {}", path));
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw std::runtime_error(fmt::format("{}: {}", path, e.what()));
  }
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error(fmt::format("cannot open {} for writing", path));
  os << j.dump(2) << '\n';
}

namespace detail {

inline Eigen::Matrix3d mat3(const json& j) {
  Eigen::Matrix3d m;
  if (j.size() != 3) throw std::runtime_error("expected a 3x3 matrix");
  for (int r = 0; r < 3; ++r) {
    if (j[static_cast<std::size_t>(r)].size() != 3) throw std::runtime_error("expected a 3x3 matrix");
    for (int c = 0; c < 3; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Eigen::Vector3d vec3(const json& j) {
  if (j.size() != 3) throw std::runtime_error("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const Eigen::Matrix3d& m) {
  json j = json::array();
  for (int r = 0; r < 3; ++r) j.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return j;
}

inline json to_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace detail

inline json camera_to_json(const Camera& c) {
  return {{"fx", c.fx},       {"fy", c.fy},   {"cx", c.cx},         {"cy", c.cy},
          {"R", detail::to_json(c.R)}, {"t", detail::to_json(c.t)}, {"width", c.width}, {"height", c.height}};
}

inline Camera camera_from_json(const json& j) {
  Camera c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.R = detail::mat3(j.at("R"));
  c.t = detail::vec3(j.at("t"));
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.validate();
  return c;
}

inline json pose_to_json(const PoseParams& p) {
  json theta = json::array();
  for (Eigen::Index r = 0; r < p.theta.rows(); ++r) theta.push_back({p.theta(r, 0), p.theta(r, 1), p.theta(r, 2)});
  json phi = json::array();
  for (Eigen::Index i = 0; i < p.phi.size(); ++i) phi.push_back(p.phi(i));
  return {{"theta", theta},
          {"phi", phi},
          {"global_rotation", detail::to_json(p.global_rotation)},
          {"global_translation", detail::to_json(p.global_translation)}};
}

inline PoseParams pose_from_json(const json& j) {
  PoseParams p;
  const json& th = j.at("theta");
  p.theta.resize(static_cast<Eigen::Index>(th.size()), 3);
  for (std::size_t r = 0; r < th.size(); ++r) {
    const Eigen::Vector3d v = detail::vec3(th[r]);
    p.theta.row(static_cast<Eigen::Index>(r)) = v.transpose();
  }
  const json& phi = j.at("phi");
  p.phi.resize(static_cast<Eigen::Index>(phi.size()));
  for (std::size_t i = 0; i < phi.size(); ++i) p.phi(static_cast<Eigen::Index>(i)) = phi[i].get<double>();
  if (j.contains("global_rotation")) {
    const json& g = j.at("global_rotation");
    p.global_rotation = g.size() == 3 && g[0].is_number() ? ad::rodrigues(detail::vec3(g)) : detail::mat3(g);
  }
  if (j.contains("global_translation")) p.global_translation = detail::vec3(j.at("global_translation"));
  return p;
}

inline Camera load_camera(const std::string& path) {
  try {
    return camera_from_json(read_json(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(fmt::format("camera {}: {}", path, e.what()));
  }
}

inline PoseParams load_pose(const std::string& path) {
  try {
    return pose_from_json(read_json(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(fmt::format("pose {}: {}", path, e.what()));
  }
}

inline void save_camera(const std::string& path, const Camera& c) { write_json(path, camera_to_json(c)); }
inline void save_pose(const std::string& path, const PoseParams& p) { write_json(path, pose_to_json(p)); }

struct FrameRecord {
  std::string image, mask, camera, pose;
  std::string split = "train";
};

struct DatasetManifest {
  std::string root;
  std::vector<FrameRecord> frames;
};

inline DatasetManifest load_manifest(const std::string& path) {
  const json j = read_json(path);
  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  if (j.contains("root")) {
    const fs::path r = j.at("root").get<std::string>();
    m.root = r.is_absolute() ? r.string() : (fs::path(m.root) / r).string();
  }
  for (const json& f : j.at("frames")) {
    FrameRecord r;
    r.image = f.at("image").get<std::string>();
    r.mask = f.at("mask").get<std::string>();
    r.camera = f.at("camera").get<std::string>();
    r.pose = f.at("pose").get<std::string>();
    if (f.contains("split")) r.split = f.at("split").get<std::string>();
    m.frames.push_back(std::move(r));
  }
  return m;
}

inline void save_manifest(const std::string& path, const DatasetManifest& m) {
  json frames = json::array();
  for (const auto& f : m.frames)
    frames.push_back({{"image", f.image}, {"mask", f.mask}, {"camera", f.camera}, {"pose", f.pose}, {"split", f.split}});
  write_json(path, {{"frames", frames}});
}

}  // namespace handsplat::io

namespace handsplat {

/// One training or evaluation frame.
struct FrameSample {
  Tensor rgb;   // (H W) x 3 in [0, 1]
  Tensor mask;  // (H W) x 1 in {0, 1}
  Camera camera;
  PoseParams pose;
  std::string pose_key;  // frames sharing a pose file share a key
  std::string split = "train";
  std::string name;

  int width() const { return camera.width; }
  int height() const { return camera.height; }
};

}  // namespace handsplat

namespace handsplat::io {

/// Loads every frame of a manifest. Errors name the frame by its index in the
/// manifest.
inline std::vector<FrameSample> load_dataset(const std::string& manifest_path) {
  DatasetManifest m;
  try {
    m = load_manifest(manifest_path);
  } catch (const std::exception& e) {
    throw DatasetError(fmt::format("manifest {}: {}", manifest_path, e.what()));
  }
  if (m.frames.empty()) throw DatasetError(fmt::format("manifest {}: no frames", manifest_path));
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (fs::path(m.root) / p).string(); };
  std::vector<FrameSample> out;
  std::map<std::string, std::pair<int, int>> resolution;  // per split
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    const FrameRecord& r = m.frames[i];
    FrameSample s;
    s.split = r.split;
    s.name = fs::path(r.image).stem().string();
    for (auto [what, path] : {std::pair{"image", r.image}, {"mask", r.mask}, {"camera", r.camera}, {"pose", r.pose}})
      if (!fs::exists(resolve(path))) throw DatasetError(fmt::format("frame {}: {} not found", i, what));
    try {
      const Image img = load_png(resolve(r.image));
      const Image mask = load_png(resolve(r.mask));
      s.camera = load_camera(resolve(r.camera));
      s.pose = load_pose(resolve(r.pose));
      s.pose_key = fs::weakly_canonical(resolve(r.pose)).string();
      if (img.width != mask.width || img.height != mask.height)
        throw std::runtime_error("image and mask sizes differ");
      if (img.width != s.camera.width || img.height != s.camera.height)
        throw std::runtime_error(fmt::format("image is {}x{} but the camera says {}x{}", img.width, img.height,
                                             s.camera.width, s.camera.height));
      const std::size_t P = img.pixels.rows();
      s.rgb = Tensor(P, 3);
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t c = 0; c < 3; ++c) s.rgb(p, c) = img.pixels(p, std::min<std::size_t>(c, img.pixels.cols() - 1));
      s.mask = Tensor(P, 1);
      for (std::size_t p = 0; p < P; ++p) s.mask[p] = mask.pixels(p, 0) >= 0.5 ? 1.0 : 0.0;
    } catch (const std::exception& e) {
      throw DatasetError(fmt::format("frame {}: {}", i, e.what()));
    }
    auto [it, fresh] = resolution.emplace(s.split, std::pair{s.width(), s.height()});
    if (!fresh && it->second != std::pair{s.width(), s.height()})
      throw DatasetError(fmt::format("frame {}: resolution {}x{} differs from the rest of split '{}' ({}x{})", i,
                                     s.width(), s.height(), s.split, it->second.first, it->second.second));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace handsplat::io
