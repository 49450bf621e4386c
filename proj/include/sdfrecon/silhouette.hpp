#pragma once

#include <cstdint>
#include <vector>

#include "sdfrecon/util.hpp"

namespace sdfrecon {

// Binary silhouette with its two-sided exact Euclidean distance transform.
// Distances are measured between pixel centers, so the smallest positive
// value is 1 px and the importance weights 1/D never blow up. A side with no
// pixels to measure against gets +inf.
struct SilhouetteMap {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> mask;           // row-major, nonzero = interior
  std::vector<double> dist_exterior;   // >0 on exterior pixels, 0 on interior
  std::vector<double> dist_interior;   // >0 on interior pixels, 0 on exterior

  bool interior(int x, int y) const { return mask[std::size_t(y) * width + x] != 0; }
  double d_ext(int x, int y) const { return dist_exterior[std::size_t(y) * width + x]; }
  double d_int(int x, int y) const { return dist_interior[std::size_t(y) * width + x]; }
  // The pixel's own side's distance (exterior pixels report d_ext and vice versa).
  double d_own(int x, int y) const { return interior(x, y) ? d_int(x, y) : d_ext(x, y); }
  std::size_t size() const { return std::size_t(width) * height; }
};

// Exact squared Euclidean distances (integer) from every pixel to the nearest
// feature pixel; feature = interior when features_interior, else exterior.
// Pixels with no feature anywhere get -1.
std::vector<int64_t> squared_distance_transform(const std::vector<uint8_t>& mask, int width,
                                                int height, bool features_interior);

// Both transforms of a mask (nonzero = interior). Throws on an empty grid.
SilhouetteMap distance_transform(const std::vector<uint8_t>& mask, int width, int height);

enum class Side { kExterior, kInterior };

// w(u) = 1/D(u) with D converted to normalized-image units (px * 2/size);
// zero off-side. Throws if the side has no pixel with finite positive distance.
std::vector<double> importance_weights(const SilhouetteMap& sil, Side side);

struct PixelSample {
  int x = 0;
  int y = 0;
  bool interior = false;
};

// Uniform sample without replacement over the full grid, reproducible from
// the seed. Returns all pixels (shuffled) when count exceeds the total.
std::vector<PixelSample> sample_pixels(const SilhouetteMap& sil, int count, uint64_t seed);

}  // namespace sdfrecon
