#pragma once

// Flat binary tensor container used for checkpoints and rig files.
//
// Byte layout (all integers little-endian):
//   magic    8 bytes  "HSPLATCK"
//   version  u32      1
//   count    u64      number of records
//   record*  count times:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank     u32, dims u64 x rank
//     data     f64 little-endian x product(dims)

#include "handsplat/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

namespace handsplat {

inline constexpr char kContainerMagic[8] = {'H', 'S', 'P', 'L', 'A', 'T', 'C', 'K'};
inline constexpr std::uint32_t kContainerVersion = 1;

/// Ordered name -> tensor map; names are unique.
using TensorMap = std::map<std::string, Tensor>;

namespace detail {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("container truncated while reading " + what);
  return v;
}

}  // namespace detail

inline void write_container(std::ostream& os, const TensorMap& records) {
  os.write(kContainerMagic, sizeof(kContainerMagic));
  detail::write_pod<std::uint32_t>(os, kContainerVersion);
  detail::write_pod<std::uint64_t>(os, records.size());
  for (const auto& [name, t] : records) {
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::write_pod<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

inline TensorMap read_container(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kContainerMagic, 8) != 0)
    throw std::runtime_error("not a tensor container (bad magic)");
  const auto version = detail::read_pod<std::uint32_t>(is, "version");
  if (version != kContainerVersion) throw std::runtime_error(fmt::format("unsupported container version {}", version));
  const auto count = detail::read_pod<std::uint64_t>(is, "record count");
  TensorMap out;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = detail::read_pod<std::uint32_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("container truncated in record name");
    const auto rank = detail::read_pod<std::uint32_t>(is, name + " rank");
    if (rank > 8) throw std::runtime_error(fmt::format("record {}: implausible rank {}", name, rank));
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_pod<std::uint64_t>(is, name + " dims");
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw std::runtime_error("container truncated in data of " + name);
    if (!out.emplace(name, std::move(t)).second) throw std::runtime_error("duplicate record " + name);
  }
  return out;
}

inline void save_container(const std::string& path, const TensorMap& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_container(os, records);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline TensorMap load_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_container(is);
}

inline const Tensor& require(const TensorMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw std::runtime_error("container is missing record '" + name + "'");
  return it->second;
}

}  // namespace handsplat
