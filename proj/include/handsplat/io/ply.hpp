#pragma once

// ASCII PLY export of a canonical point cloud.

#include "handsplat/tensor.hpp"

#include <fstream>

namespace handsplat::io {

struct PlyPoints {
  RowMatrix positions;  // N x 3
  RowMatrix normals;    // N x 3
  RowMatrix albedo;     // N x 3 in [0, 1]
  std::vector<int> generation;
  std::vector<std::uint8_t> visible;
};

inline void save_ply(const std::string& path, const PlyPoints& p) {
  const auto n = static_cast<std::size_t>(p.positions.rows());
  if (p.positions.cols() != 3 || p.normals.rows() != p.positions.rows() || p.normals.cols() != 3 ||
      p.albedo.rows() != p.positions.rows() || p.albedo.cols() != 3 || p.generation.size() != n || p.visible.size() != n)
    throw std::invalid_argument("save_ply: per-point arrays disagree in length");
  std::ofstream os(path);
  if (!os) throw std::runtime_error(fmt::format("cannot open {} for writing", path));
  os << "ply\nformat ascii 1.0\n"
     << "element vertex " << n << '\n'
     << "property double x\nproperty double y\nproperty double z\n"
     << "property double nx\nproperty double ny\nproperty double nz\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
     << "property int generation\nproperty uchar visible\n"
     << "end_header\n";
  auto byte = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    os << fmt::format("{:.9g} {:.9g} {:.9g} {:.9g} {:.9g} {:.9g} {} {} {} {} {}\n", p.positions(r, 0), p.positions(r, 1),
                      p.positions(r, 2), p.normals(r, 0), p.normals(r, 1), p.normals(r, 2), byte(p.albedo(r, 0)),
                      byte(p.albedo(r, 1)), byte(p.albedo(r, 2)), p.generation[i], int{p.visible[i]});
  }
  if (!os) throw std::runtime_error(fmt::format("write to {} failed", path));
}

}  // namespace handsplat::io
