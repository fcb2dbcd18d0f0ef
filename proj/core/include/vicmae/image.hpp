// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vicmae {

/// RGB image in height x width x 3 (HWC) order with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  static constexpr int kChannels = 3;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * kChannels, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Writes an 8-bit RGB PNG. Values are clamped and rounded to 1/255 steps.
void write_png(const std::filesystem::path& path, const Image& image);

/// Decodes an 8-bit RGB PNG to [0, 1]. Throws IoError on missing, corrupt or
/// unsupported files (anything but 8-bit RGB/gray without alpha is rejected).
Image decode_frame(const std::filesystem::path& path);

/// Bilinear resize with half-pixel centers.
Image resize_bilinear(const Image& src, int out_h, int out_w);

/// Crops [y0, y0+h) x [x0, x0+w) and resizes to out_h x out_w.
Image crop_resize(const Image& src, int y0, int x0, int h, int w, int out_h, int out_w);

}  // namespace vicmae
