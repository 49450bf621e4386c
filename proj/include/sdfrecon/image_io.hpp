#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdfrecon {

// Row-major 8-bit image, 1 (gray) or 3 (rgb) channels.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> data;

  uint8_t& at(int x, int y, int c = 0) { return data[(std::size_t(y) * width + x) * channels + c]; }
  uint8_t at(int x, int y, int c = 0) const { return data[(std::size_t(y) * width + x) * channels + c]; }
};

// Binary Netpbm. Masks are P5 with 0 = exterior and 255 = interior; RGB is P6.
void write_pgm(const std::string& path, const ImageU8& img);
void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_pgm(const std::string& path);
ImageU8 read_ppm(const std::string& path);

// 16-bit P5 depth map, linearly scaled to the recorded [zmin, zmax] range
// (kept in a header comment). Sample value 0 marks a miss.
struct DepthMap {
  int width = 0;
  int height = 0;
  double zmin = 0.0;
  double zmax = 0.0;
  std::vector<double> depth;          // NaN = miss
  double& at(int x, int y) { return depth[std::size_t(y) * width + x]; }
  double at(int x, int y) const { return depth[std::size_t(y) * width + x]; }
};

void write_depth_pgm(const std::string& path, const DepthMap& d);
DepthMap read_depth_pgm(const std::string& path);

}  // namespace sdfrecon
