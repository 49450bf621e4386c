#include "sdfrecon/silhouette.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sdfrecon {

namespace {

// Column sentinel large enough that its square stays clear of any real
// squared distance but cannot overflow int64 arithmetic below.
int64_t column_sentinel(int width, int height) { return int64_t(width) + height + 1; }

}  // namespace

// Meijster's two-pass algorithm: per-column nearest feature distances, then a
// per-row lower-envelope scan over the parabolas x -> (x-i)^2 + G(i)^2. All
// arithmetic is integral, so the result matches brute force exactly.
std::vector<int64_t> squared_distance_transform(const std::vector<uint8_t>& mask, int width,
                                                int height, bool features_interior) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("distance_transform: empty grid");
  const int64_t inf = column_sentinel(width, height);
  auto is_feature = [&](int x, int y) {
    bool in = mask[std::size_t(y) * width + x] != 0;
    return in == features_interior;
  };

  // Phase 1: vertical distances G(x,y), in pixels.
  std::vector<int64_t> g(std::size_t(width) * height);
  for (int x = 0; x < width; ++x) {
    g[x] = is_feature(x, 0) ? 0 : inf;
    for (int y = 1; y < height; ++y) {
      std::size_t i = std::size_t(y) * width + x;
      g[i] = is_feature(x, y) ? 0 : std::min(inf, g[i - width] + 1);
    }
    for (int y = height - 2; y >= 0; --y) {
      std::size_t i = std::size_t(y) * width + x;
      g[i] = std::min(g[i], g[i + width] + 1);
    }
  }

  std::vector<int64_t> out(std::size_t(width) * height);
  auto run = [&](std::size_t lo, std::size_t hi) {
    std::vector<int> s(width), tt(width);
    for (std::size_t y = lo; y < hi; ++y) {
      const int64_t* grow = &g[y * width];
      auto f = [&](int64_t x, int64_t i) { return (x - i) * (x - i) + grow[i] * grow[i]; };
      // First row index where parabola u beats parabola i.
      auto sep = [&](int64_t i, int64_t u) {
        return (u * u - i * i + grow[u] * grow[u] - grow[i] * grow[i]) / (2 * (u - i));
      };
      int q = 0;
      s[0] = 0;
      tt[0] = 0;
      for (int u = 1; u < width; ++u) {
        while (q >= 0 && f(tt[q], s[q]) > f(tt[q], u)) --q;
        if (q < 0) {
          q = 0;
          s[0] = u;
          tt[0] = 0;
        } else {
          int64_t w = 1 + sep(s[q], u);
          if (w < width) {
            ++q;
            s[q] = u;
            tt[q] = int(w);
          }
        }
      }
      for (int u = width - 1; u >= 0; --u) {
        out[y * width + u] = f(u, s[q]);
        if (u == tt[q]) --q;
      }
    }
  };
  if (height >= 64) {
    parallel_chunks(height, run);
  } else {
    run(0, std::size_t(height));
  }

  // No feature pixel anywhere: report -1 instead of the sentinel square.
  const int64_t sentinel_sq = inf * inf;
  for (auto& v : out)
    if (v >= sentinel_sq) v = -1;
  return out;
}

SilhouetteMap distance_transform(const std::vector<uint8_t>& mask, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("distance_transform: empty grid");
  if (mask.size() != std::size_t(width) * height)
    throw std::invalid_argument("distance_transform: mask size mismatch");
  SilhouetteMap sil;
  sil.width = width;
  sil.height = height;
  sil.mask.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) sil.mask[i] = mask[i] ? 1 : 0;
  const double inf = std::numeric_limits<double>::infinity();

  auto to_double = [&](const std::vector<int64_t>& sq, bool on_exterior) {
    std::vector<double> d(sq.size(), 0.0);
    for (std::size_t i = 0; i < sq.size(); ++i) {
      bool ext = mask[i] == 0;
      if (ext != on_exterior) continue;  // off-side pixels stay 0
      d[i] = sq[i] < 0 ? inf : std::sqrt(double(sq[i]));
    }
    return d;
  };
  sil.dist_exterior = to_double(squared_distance_transform(mask, width, height, true), true);
  sil.dist_interior = to_double(squared_distance_transform(mask, width, height, false), false);
  return sil;
}

std::vector<double> importance_weights(const SilhouetteMap& sil, Side side) {
  const auto& d = side == Side::kExterior ? sil.dist_exterior : sil.dist_interior;
  double px_to_norm = 2.0 / sil.width;  // square images only
  std::vector<double> w(d.size(), 0.0);
  bool any = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0 && std::isfinite(d[i])) {
      w[i] = 1.0 / (d[i] * px_to_norm);
      any = true;
    }
  }
  if (!any)
    throw std::invalid_argument("importance_weights: requested side has no measurable pixel");
  return w;
}

std::vector<PixelSample> sample_pixels(const SilhouetteMap& sil, int count, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_pixels: count must be >= 1");
  const std::size_t total = sil.size();
  std::size_t take = std::min<std::size_t>(count, total);
  std::vector<int> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = int(i);
  RngStream rng(seed);
  std::vector<PixelSample> out(take);
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + std::size_t(rng.below(total - i));
    std::swap(idx[i], idx[j]);
    PixelSample& p = out[i];
    p.x = idx[i] % sil.width;
    p.y = idx[i] / sil.width;
    p.interior = sil.mask[std::size_t(idx[i])] != 0;
  }
  return out;
}

}  // namespace sdfrecon
