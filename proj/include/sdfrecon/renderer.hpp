#pragma once

#include <functional>

#include "sdfrecon/image_io.hpp"
#include "sdfrecon/net.hpp"
#include "sdfrecon/silhouette.hpp"

namespace sdfrecon {

struct RenderConfig {
  int march_steps = 10;      // N
  int bisection_iters = 10;  // K
};

// The march starts just outside the unit-cube scene bound, never below the
// z = 1 near plane.
inline double march_start_depth(const Camera& cam) {
  return std::max(1.0, cam.distance_to_origin() - 1.2);
}

// A view's pixel batch with precomputed ray data (one column per pixel).
template <typename T>
struct PixelBatch {
  std::vector<PixelSample> pixels;
  MatX<T> uv;    // 2xB normalized coordinates
  MatX<T> dirs;  // 3xB ray factors (perspective only)
};

template <typename T>
PixelBatch<T> make_pixel_batch(const Camera& cam, std::vector<PixelSample> pixels) {
  PixelBatch<T> out;
  out.pixels = std::move(pixels);
  const int b = int(out.pixels.size());
  out.uv.resize(2, b);
  out.dirs.resize(3, b);
  for (int i = 0; i < b; ++i) {
    Vec2 u = pixel_to_normalized(out.pixels[i].x, out.pixels[i].y, cam);
    out.uv(0, i) = T(u.x());
    out.uv(1, i) = T(u.y());
    Vec3 d = ray_direction(u, cam);
    for (int k = 0; k < 3; ++k) out.dirs(k, i) = T(d[k]);
  }
  return out;
}

// Object-frame points of the batch at (differentiable) depths z_row.
template <typename T>
typename Tape<T>::Ref object_points(Tape<T>& tape, const Camera& cam, const PixelBatch<T>& px,
                                    typename Tape<T>::Ref z_row) {
  using Ref = typename Tape<T>::Ref;
  const int b = int(px.pixels.size());
  Ref cam_pts;
  if (cam.model == CameraModel::kOrthographic) {
    cam_pts = tape.concat_rows(tape.constant(px.uv), z_row);
  } else {
    // point(z) = (z + f - 1) * [u/f; 1]
    Ref depth = cam.focal == 1.0 ? z_row : tape.add_scalar(z_row, T(cam.focal - 1.0));
    cam_pts = tape.cwise_mul(tape.constant(px.dirs), tape.broadcast_rows(depth, 3));
  }
  MatX<T> R = cam.R.cast<T>();
  MatX<T> t = cam.t.cast<T>();
  return tape.affine(tape.constant(std::move(R)), cam_pts, tape.constant(std::move(t)));
}

// A batched learned march. depths/sdf keep the tape handles for loss
// assembly; *_values cache the forward values ((N+1) x B).
template <typename T>
struct MarchBatch {
  std::vector<typename Tape<T>::Ref> z;  // N+1 depth rows
  std::vector<typename Tape<T>::Ref> f;  // N+1 sdf rows
  typename Tape<T>::Ref z_star;          // set by bisection_refine
  std::vector<uint8_t> crossed;
  MatX<T> z_values, f_values;
};

// Learned ray march: z(0) fixed at the configured start depth, then N
// recurrent steps, each fed the backbone feature of the current object-frame
// point. The whole unroll is recorded for end-to-end gradients.
template <typename T>
MarchBatch<T> ray_march(NetGraph<T>& net, const Camera& cam, const PixelBatch<T>& px,
                        int n_steps) {
  if (n_steps < 2) throw std::invalid_argument("ray_march: need at least 2 steps");
  auto& tape = net.tape();
  const int b = int(px.pixels.size());
  MarchBatch<T> mb;
  mb.z_values.resize(n_steps + 1, b);
  mb.f_values.resize(n_steps + 1, b);

  MatX<T> z0 = MatX<T>::Constant(1, b, T(march_start_depth(cam)));
  typename Tape<T>::Ref z = tape.constant(std::move(z0));
  auto state = net.initial_state(b);
  for (int j = 0; j < n_steps; ++j) {
    auto pts = object_points(tape, cam, px, z);
    auto feat = net.feature(pts);
    auto fj = net.sdf_from_feature(feat);
    auto [next_state, dz] = net.step_cell(feat, state);
    mb.z.push_back(z);
    mb.f.push_back(fj);
    mb.z_values.row(j) = tape.value(z);
    mb.f_values.row(j) = tape.value(fj);
    z = tape.add(z, dz);
    state = next_state;
  }
  auto pts_last = object_points(tape, cam, px, z);
  auto f_last = net.sdf(pts_last);
  mb.z.push_back(z);
  mb.f.push_back(f_last);
  mb.z_values.row(n_steps) = tape.value(z);
  mb.f_values.row(n_steps) = tape.value(f_last);

  mb.crossed.resize(b);
  for (int i = 0; i < b; ++i)
    mb.crossed[i] = mb.f_values(n_steps - 1, i) > T(0) && mb.f_values(n_steps, i) < T(0);
  return mb;
}

// Unrolled bisection on the last march interval. Branch decisions come from
// plain (untaped) field evaluations; the refined depth enters the tape as a
// fixed convex combination of the bracket endpoints, so gradients flow only
// through the final field evaluations made at z_star by the caller. Rays that
// never crossed fall back to z(N).
template <typename T>
void bisection_refine(NetGraph<T>& net, const FieldParams<T>& params, const Camera& cam,
                      const PixelBatch<T>& px, MarchBatch<T>& mb, int iters) {
  auto& tape = net.tape();
  const int b = int(px.pixels.size());
  const int n = int(mb.z.size()) - 1;
  std::vector<int> cols;
  for (int i = 0; i < b; ++i)
    if (mb.crossed[i]) cols.push_back(i);

  // Convex-combination coefficients of [z(N-1), z(N)] per bracket side.
  Eigen::ArrayXd lo_a = Eigen::ArrayXd::Ones(Eigen::Index(cols.size()));
  Eigen::ArrayXd hi_a = Eigen::ArrayXd::Zero(Eigen::Index(cols.size()));
  if (!cols.empty()) {
    const Eigen::Index m = Eigen::Index(cols.size());
    Eigen::ArrayXd zl(m), zh(m);
    PixelBatch<T> sub;
    sub.pixels.resize(cols.size());
    sub.uv.resize(2, m);
    sub.dirs.resize(3, m);
    for (Eigen::Index k = 0; k < m; ++k) {
      zl[k] = double(mb.z_values(n - 1, cols[std::size_t(k)]));
      zh[k] = double(mb.z_values(n, cols[std::size_t(k)]));
      sub.pixels[std::size_t(k)] = px.pixels[cols[std::size_t(k)]];
      sub.uv.col(k) = px.uv.col(cols[std::size_t(k)]);
      sub.dirs.col(k) = px.dirs.col(cols[std::size_t(k)]);
    }
    // Untaped probe graph for the sign tests.
    Tape<T> probe;
    NetGraph<T> pnet(probe, params, false);
    for (int it = 0; it < iters; ++it) {
      Eigen::ArrayXd mid_a = (lo_a + hi_a) * 0.5;
      MatX<T> mids(1, m);
      for (Eigen::Index k = 0; k < m; ++k)
        mids(0, k) = T(mid_a[k] * zl[k] + (1.0 - mid_a[k]) * zh[k]);
      auto fmid =
          probe.value(pnet.sdf(object_points(probe, cam, sub, probe.constant(std::move(mids)))));
      for (Eigen::Index k = 0; k < m; ++k) {
        if (fmid(0, k) > T(0))
          lo_a[k] = mid_a[k];
        else
          hi_a[k] = mid_a[k];
      }
    }
  }

  MatX<T> coef_prev = MatX<T>::Zero(1, b);  // weight on z(N-1)
  MatX<T> coef_last = MatX<T>::Ones(1, b);  // weight on z(N)
  for (std::size_t k = 0; k < cols.size(); ++k) {
    double a = 0.5 * (lo_a[Eigen::Index(k)] + hi_a[Eigen::Index(k)]);
    coef_prev(0, cols[k]) = T(a);
    coef_last(0, cols[k]) = T(1.0 - a);
  }
  mb.z_star = tape.add(tape.cwise_mul(tape.constant(std::move(coef_prev)), mb.z[n - 1]),
                       tape.cwise_mul(tape.constant(std::move(coef_last)), mb.z[n]));
}

// Rendered colors at the refined crossing (3xB in [0,1]).
template <typename T>
typename Tape<T>::Ref render_rgb(NetGraph<T>& net, const Camera& cam, const PixelBatch<T>& px,
                                 typename Tape<T>::Ref z_star) {
  auto pts = object_points(net.tape(), cam, px, z_star);
  return net.rgb(pts);
}

// Per-pixel view of a batched march, matching the per-ray trace layout.
struct MarchTrace {
  Vec2 u;
  std::vector<double> depths;
  std::vector<double> sdf_values;
  double z_star = 0.0;
  bool crossed = false;
};

template <typename T>
MarchTrace extract_trace(const Tape<T>& tape, const MarchBatch<T>& mb, const PixelBatch<T>& px,
                         int i) {
  MarchTrace tr;
  tr.u = Vec2(double(px.uv(0, i)), double(px.uv(1, i)));
  for (int j = 0; j < mb.z_values.rows(); ++j) {
    tr.depths.push_back(double(mb.z_values(j, i)));
    tr.sdf_values.push_back(double(mb.f_values(j, i)));
  }
  tr.crossed = mb.crossed[i] != 0;
  tr.z_star = mb.z_star.valid() ? double(tape.value(mb.z_star)(0, i))
                                : tr.depths.back();
  return tr;
}

// ---- oracle-side rendering --------------------------------------------------

using ScalarField = std::function<double(const Vec3&)>;

// Interval-halving root refinement of field(object_point(z)) on [lo, hi].
// Assumes field(lo) > 0 > field(hi).
double bisect_depth(const ScalarField& field_obj, const Camera& cam, const Vec2& u, double lo,
                    double hi, int iters);

struct TraceResult {
  bool hit = false;
  double depth = 0.0;
};

// Classical sphere tracing against a 1-Lipschitz SDF (oracle renderer for
// analytic scenes). Steps are scaled by the ray direction norm so the field
// bound is honored in 3D.
TraceResult sphere_trace(const ScalarField& field_obj, const Camera& cam, const Vec2& u,
                         double z_start, double z_far, int max_steps = 256, double tol = 1e-7);

// Renders RGB + depth of a learned field by batched march + bisection; depth
// is NaN where the sign condition never triggered.
template <typename T>
void render_image(const FieldParams<T>& params, const Camera& cam, const RenderConfig& rc,
                  ImageU8* rgb_out, DepthMap* depth_out);

extern template void render_image<float>(const FieldParams<float>&, const Camera&,
                                         const RenderConfig&, ImageU8*, DepthMap*);
extern template void render_image<double>(const FieldParams<double>&, const Camera&,
                                          const RenderConfig&, ImageU8*, DepthMap*);

}  // namespace sdfrecon
