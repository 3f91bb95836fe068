#pragma once

// Thin libpng wrappers for 8-bit images/masks and 16-bit disparity maps.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "seldist/core/tensor.hpp"

namespace seldist::io {

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 (gray) or 3 (RGB)
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

inline PngImage read_png(const std::string& path) {
  detail::FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open PNG: " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error("malformed PNG (bad signature): " + path);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  PngImage img;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("malformed PNG: " + path);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host order for little-endian hosts
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(img.height));
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  if (img.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      img.samples[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) img.samples[i] = buffer[i];
  }
  return img;
}

inline void write_png(const std::string& path, const PngImage& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
  if (img.bit_depth != 8 && img.bit_depth != 16) throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  detail::FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write PNG: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  const int bytes = img.bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels * bytes;
  std::vector<unsigned char> buffer(rowbytes * static_cast<std::size_t>(img.height));
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    if (bytes == 2) {
      buffer[2 * i] = static_cast<unsigned char>(img.samples[i] >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<unsigned char>(img.samples[i] & 0xFF);
    } else {
      buffer[i] = static_cast<unsigned char>(img.samples[i]);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encoding failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), img.bit_depth,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed settings keep output byte-identical across runs.
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// RGB/gray 8-bit image -> (C,H,W) tensor in [0,1].
inline Tensor image_to_tensor(const PngImage& img) {
  Tensor t(Shape{img.channels, img.height, img.width});
  const double scale = img.bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        t(c, y, x) = img.samples[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] * scale;
  return t;
}

/// (C,H,W) tensor in [0,1] -> 8-bit PNG image (values rounded, clamped).
inline PngImage tensor_to_image(const Tensor& t) {
  PngImage img{t.width(), t.height(), t.channels(), 8, {}};
  img.samples.resize(t.size());
  for (int y = 0; y < t.height(); ++y)
    for (int x = 0; x < t.width(); ++x)
      for (int c = 0; c < t.channels(); ++c) {
        const double v = std::clamp(t(c, y, x), 0.0, 1.0);
        img.samples[(static_cast<std::size_t>(y) * t.width() + x) * t.channels() + c] =
            static_cast<std::uint16_t>(std::lround(v * 255.0));
      }
  return img;
}

/// 16-bit gray PNG with value = round(d * 256), the KITTI disparity convention.
inline void write_disparity_png(const std::string& path, const Tensor& d) {
  PngImage img{d.width(), d.height(), 1, 16, {}};
  img.samples.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = std::clamp(d[i] * 256.0, 0.0, 65535.0);
    img.samples[i] = static_cast<std::uint16_t>(std::lround(v));
  }
  write_png(path, img);
}

inline Tensor read_disparity_png(const std::string& path) {
  const PngImage img = read_png(path);
  if (img.channels != 1 || img.bit_depth != 16) {
    throw std::runtime_error("disparity PNG must be 16-bit single channel: " + path);
  }
  Tensor d(Shape{1, img.height, img.width});
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = img.samples[i] / 256.0;
  return d;
}

/// 8-bit mask PNG: 255 for 1, 0 for 0.
inline void write_mask_png(const std::string& path, const Tensor& m) {
  PngImage img{m.width(), m.height(), 1, 8, {}};
  img.samples.resize(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) img.samples[i] = m[i] != 0.0 ? 255 : 0;
  write_png(path, img);
}

inline Tensor read_mask_png(const std::string& path) {
  const PngImage img = read_png(path);
  Tensor m(Shape{1, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      m(0, y, x) = img.samples[(static_cast<std::size_t>(y) * img.width + x) * img.channels] >= 128 ? 1.0 : 0.0;
  return m;
}

}  // namespace seldist::io
