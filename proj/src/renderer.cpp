#include "sdfrecon/renderer.hpp"

#include <cmath>

namespace sdfrecon {

double bisect_depth(const ScalarField& field_obj, const Camera& cam, const Vec2& u, double lo,
                    double hi, int iters) {
  auto f = [&](double z) { return field_obj(cam.to_object(backproject(u, z, cam))); };
  for (int i = 0; i < iters; ++i) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) > 0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

TraceResult sphere_trace(const ScalarField& field_obj, const Camera& cam, const Vec2& u,
                         double z_start, double z_far, int max_steps, double tol) {
  double dir_norm = cam.model == CameraModel::kOrthographic
                        ? 1.0
                        : ray_direction(u, cam).norm();
  double z = z_start;
  for (int i = 0; i < max_steps; ++i) {
    double d = field_obj(cam.to_object(backproject(u, z, cam)));
    if (d < tol) return {true, z};
    z += d / dir_norm;
    if (z > z_far) return {false, z};
  }
  return {false, z};
}

template <typename T>
void render_image(const FieldParams<T>& params, const Camera& cam, const RenderConfig& rc,
                  ImageU8* rgb_out, DepthMap* depth_out) {
  const int w = cam.width, h = cam.height;
  if (rgb_out) {
    rgb_out->width = w;
    rgb_out->height = h;
    rgb_out->channels = 3;
    rgb_out->data.assign(std::size_t(w) * h * 3, 0);
  }
  if (depth_out) {
    depth_out->width = w;
    depth_out->height = h;
    depth_out->depth.assign(std::size_t(w) * h, std::numeric_limits<double>::quiet_NaN());
  }

  const int rows_per_chunk = std::max(1, 4096 / w);
  for (int y0 = 0; y0 < h; y0 += rows_per_chunk) {
    int y1 = std::min(h, y0 + rows_per_chunk);
    std::vector<PixelSample> pixels;
    pixels.reserve(std::size_t(w) * (y1 - y0));
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < w; ++x) pixels.push_back({x, y, false});
    Tape<T> tape;
    NetGraph<T> net(tape, params, false);
    auto px = make_pixel_batch<T>(cam, std::move(pixels));
    auto mb = ray_march(net, cam, px, rc.march_steps);
    bisection_refine(net, params, cam, px, mb, rc.bisection_iters);
    auto colors = tape.value(render_rgb(net, cam, px, mb.z_star));
    auto zstar = tape.value(mb.z_star);
    for (std::size_t i = 0; i < px.pixels.size(); ++i) {
      int x = px.pixels[i].x, y = px.pixels[i].y;
      if (rgb_out)
        for (int c = 0; c < 3; ++c) {
          double v = std::clamp(double(colors(c, Eigen::Index(i))), 0.0, 1.0);
          rgb_out->at(x, y, c) = uint8_t(std::lround(v * 255.0));
        }
      if (depth_out && mb.crossed[i]) depth_out->at(x, y) = double(zstar(0, Eigen::Index(i)));
    }
  }
  if (depth_out) {
    double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
    for (double d : depth_out->depth)
      if (std::isfinite(d)) {
        zmin = std::min(zmin, d);
        zmax = std::max(zmax, d);
      }
    if (!(zmin <= zmax)) {
      zmin = 0;
      zmax = 0;
    }
    depth_out->zmin = zmin;
    depth_out->zmax = zmax;
  }
}

template void render_image<float>(const FieldParams<float>&, const Camera&, const RenderConfig&,
                                  ImageU8*, DepthMap*);
template void render_image<double>(const FieldParams<double>&, const Camera&, const RenderConfig&,
                                   ImageU8*, DepthMap*);

}  // namespace sdfrecon
