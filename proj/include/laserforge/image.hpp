#pragma once

#include <cstdint>
#include <vector>

#include "laserforge/error.hpp"

namespace laserforge {

/// 8-bit grayscale image, row-major, pixel centers at integer coordinates.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
    if (w < 1 || h < 1) fail(errc::bad_dimensions, "image dimensions must be >= 1");
  }

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

}  // namespace laserforge
