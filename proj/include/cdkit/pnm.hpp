#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "cdkit/grid.hpp"

namespace cdkit::io {

// 8-bit RGB raster, row-major, interleaved channels.
struct ImageRGB {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> data;  // h*w*3

  static ImageRGB zeros(int h, int w) {
    return ImageRGB{h, w, std::vector<uint8_t>(size_t(h) * w * 3, 0)};
  }
  uint8_t at(int y, int x, int c) const { return data[(size_t(y) * w + x) * 3 + c]; }
  uint8_t& at(int y, int x, int c) { return data[(size_t(y) * w + x) * 3 + c]; }
  bool operator==(const ImageRGB&) const = default;
};

// Binary PPM (P6), maxval 255.
void write_ppm(const std::string& path, const ImageRGB& img);
ImageRGB read_ppm(const std::string& path);

// Binary PGM (P5), maxval 255. Masks are written 0/255; the reader maps any
// nonzero byte to 1.
void write_pgm(const std::string& path, const grid::ChangeMask& mask);
grid::ChangeMask read_pgm(const std::string& path);

}  // namespace cdkit::io
