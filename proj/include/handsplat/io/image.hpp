#pragma once

// PNG and NPY rasters. Images in memory are (H W) x C tensors with values in
// [0, 1], row-major pixel order.

#include "handsplat/tensor.hpp"

#include <fmt/core.h>
#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace handsplat::io {

struct Image {
  int width = 0, height = 0;
  Tensor pixels;  // (H W) x C

  int channels() const { return static_cast<int>(pixels.cols()); }
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

inline void png_error_fn(png_structp, png_const_charp msg) { throw ImageError(msg); }
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

/// 8-bit PNG; values are clamped to [0, 1] and rounded. 1 channel -> gray,
/// 3 -> RGB, 4 -> RGBA.
inline void save_png(const std::string& path, const Tensor& pixels, int width, int height) {
  const auto C = pixels.cols();
  if (pixels.rows() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) || (C != 1 && C != 3 && C != 4))
    throw ShapeError(fmt::format("save_png: {} for a {}x{} image", pixels.shape_str(), width, height));
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ImageError(fmt::format("cannot open {} for writing", path));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png_create_info_struct(png);
  std::vector<png_byte> row(static_cast<std::size_t>(width) * C);
  try {
    png_init_io(png, fp.get());
    const int type = C == 1 ? PNG_COLOR_TYPE_GRAY : C == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_RGBA;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // Fixed header so identical pixels give identical bytes.
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        const double v = pixels.data()[static_cast<std::size_t>(y) * row.size() + i];
        row[i] = static_cast<png_byte>(std::lround(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0) * 255.0));
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

inline void save_png(const std::string& path, const Image& img) { save_png(path, img.pixels, img.width, img.height); }

/// Reads 8- or 16-bit gray / gray-alpha / RGB / RGBA / palette PNGs. Palette
/// and low bit depths are expanded; the channel count of the file is kept.
inline Image load_png(const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageError(fmt::format("cannot open {}", path));
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw ImageError(fmt::format("{} is not a PNG file", path));
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png_create_info_struct(png);
  Image img;
  try {
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int type = png_get_color_type(png, info), depth = png_get_bit_depth(png, info);
    if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (depth == 16) png_set_strip_16(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    const int C = png_get_channels(png, info);
    std::vector<png_byte> data(static_cast<std::size_t>(img.width * img.height * C));
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = data.data() + static_cast<std::size_t>(y * img.width * C);
    png_read_image(png, rows.data());
    img.pixels = Tensor(static_cast<std::size_t>(img.width * img.height), static_cast<std::size_t>(C));
    for (std::size_t i = 0; i < data.size(); ++i) img.pixels[i] = data[i] / 255.0;
  } catch (const ImageError& e) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(fmt::format("{}: {}", path, e.what()));
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

/// Little-endian float32 .npy of shape (H, W) or (H, W, C).
inline void save_npy(const std::string& path, const Tensor& pixels, int width, int height) {
  if (pixels.rows() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw ShapeError(fmt::format("save_npy: {} for a {}x{} image", pixels.shape_str(), width, height));
  const std::string shape = pixels.cols() == 1 ? fmt::format("({}, {})", height, width)
                                               : fmt::format("({}, {}, {})", height, width, pixels.cols());
  std::string header = fmt::format("{{'descr': '<f4', 'fortran_order': False, 'shape': {}, }}", shape);
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ImageError(fmt::format("cannot open {} for writing", path));
  os.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char lb[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  os.write(lb, 2);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (double v : pixels.values()) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
  if (!os) throw ImageError(fmt::format("write failed: {}", path));
}

/// Reads what save_npy writes.
inline Image load_npy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ImageError(fmt::format("cannot open {}", path));
  char magic[10];
  is.read(magic, 10);
  if (!is || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw ImageError(fmt::format("{} is not an npy file", path));
  const std::size_t len = static_cast<unsigned char>(magic[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(magic[9])) << 8);
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  if (header.find("'<f4'") == std::string::npos || header.find("'fortran_order': False") == std::string::npos)
    throw ImageError(fmt::format("{}: only C-order float32 arrays are supported", path));
  const auto open = header.find('('), close = header.find(')');
  std::vector<int> dims;
  for (std::size_t p = open + 1; p < close;) {
    while (p < close && !std::isdigit(static_cast<unsigned char>(header[p]))) ++p;
    if (p >= close) break;
    std::size_t q = p;
    while (q < close && std::isdigit(static_cast<unsigned char>(header[q]))) ++q;
    dims.push_back(std::stoi(header.substr(p, q - p)));
    p = q;
  }
  if (dims.size() != 2 && dims.size() != 3) throw ImageError(fmt::format("{}: expected a 2-D or 3-D array", path));
  Image img;
  img.height = dims[0];
  img.width = dims[1];
  const std::size_t C = dims.size() == 3 ? static_cast<std::size_t>(dims[2]) : 1;
  img.pixels = Tensor(static_cast<std::size_t>(img.width * img.height), C);
  std::vector<float> buf(img.pixels.size());
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw ImageError(fmt::format("{}: truncated data", path));
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i];
  return img;
}

}  // namespace handsplat::io
