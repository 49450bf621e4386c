#include <doctest.h>

#include "helpers.hpp"
#include "sdfrecon/renderer.hpp"

using namespace sdfrecon;
using namespace sdfrecon::testing;

namespace {

// Object-frame sphere of radius r at the origin.
ScalarField sphere_sdf(double r = 0.5) {
  return [r](const Vec3& x) { return x.norm() - r; };
}

// Camera at the origin looking down +z; scene placed in front of it.
Camera origin_camera() {
  Camera cam;
  cam.width = 64;
  cam.height = 64;
  return cam;
}

}  // namespace

TEST_CASE("sphere_trace: axis ray, miss, and agreement with bisection") {
  Camera cam = origin_camera();
  ScalarField ball = [](const Vec3& x) { return (x - Vec3(0, 0, 2)).norm() - 0.5; };
  auto hit = sphere_trace(ball, cam, Vec2(0, 0), 1.0, 4.0, 256, 1e-7);
  REQUIRE(hit.hit);
  CHECK(hit.depth == doctest::Approx(1.5).epsilon(1e-6));

  auto miss = sphere_trace(ball, cam, Vec2(0.9, 0.9), 1.0, 4.0, 256, 1e-7);
  CHECK_FALSE(miss.hit);

  // central ray bracket [1, 2] refines to the sphere crossing
  double zstar = bisect_depth(ball, cam, Vec2(0, 0), 1.0, 2.0, 10);
  CHECK(std::abs(zstar - 1.5) < std::pow(2.0, -10.0));

  // where both report a crossing they agree
  RngStream rng(5);
  for (int i = 0; i < 100; ++i) {
    Vec2 u(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15));
    auto tr = sphere_trace(ball, cam, u, 1.0, 4.0, 512, 1e-9);
    REQUIRE(tr.hit);
    double zb = bisect_depth(ball, cam, u, tr.depth - 0.05, tr.depth + 0.05, 16);
    CHECK(std::abs(zb - tr.depth) < 1e-3);
  }
}

TEST_CASE("sphere_trace silhouette matches the analytic disc up to one pixel") {
  Camera cam = test_camera(128);
  ScalarField ball = sphere_sdf(0.5);
  const double dist = cam.distance_to_origin();
  int mismatches = 0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      Vec2 u = pixel_to_normalized(x, y, cam);
      auto tr = sphere_trace(ball, cam, u, march_start_depth(cam), dist + 1.8, 512, 1e-9);
      Vec3 dir = ray_direction(u, cam).normalized();
      double sin_angle = std::sqrt(std::max(0.0, 1.0 - dir.z() * dir.z()));
      double margin = dist * sin_angle - 0.5;  // ray-to-center clearance vs radius
      // one-pixel angular band around the rim
      double band = 1.5 * (2.0 / 128.0) * dist;
      if (std::abs(margin) < band) continue;
      bool expect_hit = margin < 0;
      if (tr.hit != expect_hit) ++mismatches;
    }
  CHECK(mismatches == 0);
}

TEST_CASE("ray_march: zeroed step cell stays at the start depth") {
  auto p = FieldParams<double>::zeros(tiny_net_config());
  Camera cam = test_camera(16);
  Tape<double> tape;
  NetGraph<double> net(tape, p, false);
  auto px = make_pixel_batch<double>(cam, sample_pixels(distance_transform(
      std::vector<uint8_t>(16 * 16, 1), 16, 16), 32, 3));
  auto mb = ray_march(net, cam, px, 6);
  REQUIRE(mb.z.size() == 7);
  REQUIRE(mb.f.size() == 7);
  const double z0 = march_start_depth(cam);
  CHECK(mb.z_values.minCoeff() == z0);
  CHECK(mb.z_values.maxCoeff() == z0);
}

TEST_CASE("ray_march: depths never decrease") {
  auto p = FieldParams<double>::init(tiny_net_config(), 99);
  Camera cam = test_camera(32);
  Tape<double> tape;
  NetGraph<double> net(tape, p, false);
  std::vector<PixelSample> pixels;
  for (int i = 0; i < 1000; ++i) pixels.push_back({i % 32, (i / 32) % 32, false});
  auto px = make_pixel_batch<double>(cam, pixels);
  auto mb = ray_march(net, cam, px, 10);
  for (int j = 0; j + 1 < int(mb.z.size()); ++j) {
    auto diff = (mb.z_values.row(j + 1) - mb.z_values.row(j)).minCoeff();
    CHECK(diff >= 0.0);
  }
}

TEST_CASE("batched bisection matches the scalar refiner on a fitted sphere") {
  const auto& p = pretrained_small_sphere();
  Camera cam = test_camera(64);
  ScalarField learned = [&](const Vec3& x) { return eval_sdf(p, x); };

  // craft a bracket batch on central pixels: f(1.6) > 0 > f(2.0) along the axis
  std::vector<PixelSample> pixels;
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j) pixels.push_back({32 + i, 32 + j, true});
  auto px = make_pixel_batch<double>(cam, pixels);
  const int b = int(pixels.size());

  Tape<double> tape;
  NetGraph<double> net(tape, p, false);
  MarchBatch<double> mb;
  MatX<double> zlo = MatX<double>::Constant(1, b, 1.2);
  MatX<double> zhi = MatX<double>::Constant(1, b, 1.9);
  mb.z.push_back(tape.constant(zlo));
  mb.z.push_back(tape.constant(zhi));
  mb.z_values.resize(2, b);
  mb.z_values.row(0) = zlo;
  mb.z_values.row(1) = zhi;
  mb.f_values.resize(2, b);
  mb.f.push_back(net.sdf(object_points(tape, cam, px, mb.z[0])));
  mb.f.push_back(net.sdf(object_points(tape, cam, px, mb.z[1])));
  mb.f_values.row(0) = tape.value(mb.f[0]);
  mb.f_values.row(1) = tape.value(mb.f[1]);
  mb.crossed.assign(std::size_t(b), 0);
  for (int i = 0; i < b; ++i) {
    REQUIRE(mb.f_values(0, i) > 0);
    REQUIRE(mb.f_values(1, i) < 0);
    mb.crossed[std::size_t(i)] = 1;
  }

  bisection_refine(net, p, cam, px, mb, 12);
  auto zstar = tape.value(mb.z_star);
  for (int i = 0; i < b; ++i) {
    Vec2 u(px.uv(0, i), px.uv(1, i));
    double zs = bisect_depth(learned, cam, u, 1.2, 1.9, 12);
    CHECK(std::abs(zstar(0, i) - zs) < 0.7 * std::pow(2.0, -10.0));
    double f_at_star = learned(cam.to_object(backproject(u, zstar(0, i), cam)));
    CHECK(std::abs(f_at_star) < 1e-3);
  }
}

TEST_CASE("bisection falls back to the last depth when nothing crossed") {
  auto p = FieldParams<double>::zeros(tiny_net_config());
  p.sdf_b(0, 0) = 1.0;  // field is +1 everywhere, no crossing
  Camera cam = test_camera(16);
  Tape<double> tape;
  NetGraph<double> net(tape, p, false);
  std::vector<PixelSample> pixels{{8, 8, true}, {4, 4, false}};
  auto px = make_pixel_batch<double>(cam, pixels);
  auto mb = ray_march(net, cam, px, 4);
  bisection_refine(net, p, cam, px, mb, 8);
  CHECK((tape.value(mb.z_star) - mb.z_values.row(4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("render_rgb: zeroed head renders gray; gradients match finite differences") {
  NetConfig cfg = tiny_net_config();
  auto p = FieldParams<double>::init(cfg, 7);
  p.rgb_W.setZero();
  p.rgb_b.setZero();
  Camera cam = test_camera(16);
  std::vector<PixelSample> pixels{{8, 8, true}, {7, 9, true}, {9, 7, true}, {6, 6, true}};
  {
    Tape<double> tape;
    NetGraph<double> net(tape, p, false);
    auto px = make_pixel_batch<double>(cam, pixels);
    auto mb = ray_march(net, cam, px, 4);
    bisection_refine(net, p, cam, px, mb, 6);
    auto rgb = tape.value(render_rgb(net, cam, px, mb.z_star));
    CHECK((rgb.array() - 0.5).abs().maxCoeff() == 0.0);
  }

  // end-to-end gradient (march + bisection + rgb) vs central differences
  auto q = FieldParams<double>::init(cfg, 11);
  auto loss_at = [&](const FieldParams<double>& params) {
    Tape<double> tape;
    NetGraph<double> net(tape, params, false);
    auto px = make_pixel_batch<double>(cam, pixels);
    auto mb = ray_march(net, cam, px, 4);
    bisection_refine(net, params, cam, px, mb, 6);
    return tape.value(tape.sum(render_rgb(net, cam, px, mb.z_star)))(0, 0);
  };
  Tape<double> tape;
  NetGraph<double> net(tape, q, true);
  auto px = make_pixel_batch<double>(cam, pixels);
  auto mb = ray_march(net, cam, px, 4);
  bisection_refine(net, q, cam, px, mb, 6);
  auto loss = tape.sum(render_rgb(net, cam, px, mb.z_star));
  tape.backward(loss);
  std::vector<double> grads(std::size_t(cfg.param_count()), 0.0);
  net.accumulate_gradients(grads);

  std::vector<double> flat = q.to_flat();
  RngStream rng(17);
  const double h = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    std::size_t i = std::size_t(rng.below(flat.size()));
    auto pert = q;
    auto fp = flat;
    fp[i] += h;
    pert.from_flat(fp);
    double up = loss_at(pert);
    fp[i] -= 2 * h;
    pert.from_flat(fp);
    double dn = loss_at(pert);
    double fd = (up - dn) / (2 * h);
    if (std::abs(fd) < 1e-7 && std::abs(grads[i]) < 1e-7) continue;
    double rel = std::abs(grads[i] - fd) / std::max(std::abs(fd), 1e-7);
    INFO("param ", i, ": analytic ", grads[i], " fd ", fd);
    CHECK(rel < 1e-3);
    ++checked;
  }
  CHECK(checked > 80);
}

TEST_CASE("render_image produces a silhouette-consistent depth map") {
  const auto& p = pretrained_small_sphere();
  auto pf = p.cast<float>();
  Camera cam = test_camera(32);
  RenderConfig rc;
  rc.march_steps = 8;
  ImageU8 img;
  DepthMap depth;
  render_image(pf, cam, rc, &img, &depth);
  CHECK(img.width == 32);
  // the center of the image should have hit the sphere near depth 1.5
  double center_depth = depth.at(16, 16);
  if (std::isfinite(center_depth)) CHECK(center_depth == doctest::Approx(1.5).epsilon(0.1));
}
