// SPDX-License-Identifier: Apache-2.0
#include "vicmae/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>

#include "vicmae/error.hpp"

namespace vicmae {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text != nullptr) *text = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.height <= 0 || image.width <= 0) {
    throw ValidationError("write_png: empty image");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) {
    throw IoError("cannot open for writing: " + path.string());
  }
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png encode failed for " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width * 3; ++x) {
      const float v = std::clamp(image.pixels[static_cast<std::size_t>(y) * image.width * 3 + x], 0.0f, 1.0f);
      row[static_cast<std::size_t>(x)] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image decode_frame(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) {
    throw IoError("cannot open frame: " + path.string());
  }
  std::array<png_byte, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), file.get()) != sig.size() || png_sig_cmp(sig.data(), 0, 8) != 0) {
    throw IoError("unsupported or corrupt frame (not PNG): " + path.string());
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Image out;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt frame " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_GRAY) ||
      png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout (need 8-bit RGB or gray, non-interlaced): " + path.string());
  }
  const int channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  out = Image(static_cast<int>(png_get_image_height(png, info)), static_cast<int>(png_get_image_width(png, info)));
  row.resize(static_cast<std::size_t>(out.width) * channels);
  for (int y = 0; y < out.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const png_byte b = row[static_cast<std::size_t>(x) * channels + (channels == 3 ? c : 0)];
        out.at(y, x, c) = static_cast<float>(b) / 255.0f;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

Image crop_resize(const Image& src, int y0, int x0, int h, int w, int out_h, int out_w) {
  if (h <= 0 || w <= 0 || y0 < 0 || x0 < 0 || y0 + h > src.height || x0 + w > src.width) {
    throw ValidationError("crop_resize: crop outside image");
  }
  Image out(out_h, out_w);
  if (h == out_h && w == out_w) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(y0 + y, x0 + x, c);
      }
    }
    return out;
  }
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int ya = static_cast<int>(std::floor(fy));
    const int yb = std::min(ya + 1, h - 1);
    const double wy = fy - ya;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int xa = static_cast<int>(std::floor(fx));
      const int xb = std::min(xa + 1, w - 1);
      const double wx = fx - xa;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - wx) * src.at(y0 + ya, x0 + xa, c) + wx * src.at(y0 + ya, x0 + xb, c);
        const double bot = (1 - wx) * src.at(y0 + yb, x0 + xa, c) + wx * src.at(y0 + yb, x0 + xb, c);
        out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
  return crop_resize(src, 0, 0, src.height, src.width, out_h, out_w);
}

}  // namespace vicmae
