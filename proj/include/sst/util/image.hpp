#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sst::util {

// 8-bit sRGB image, row-major, 3 channels.
struct Image {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb((size_t)w * h * 3, 0) {}

  uint8_t* px(int r, int c) { return &rgb[((size_t)r * width + c) * 3]; }
  const uint8_t* px(int r, int c) const { return &rgb[((size_t)r * width + c) * 3]; }
};

// Lossless PNG (8-bit RGB, non-interlaced). Throws std::runtime_error on
// malformed files.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace sst::util
