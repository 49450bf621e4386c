#include <doctest.h>

#include "sdfrecon/mesh.hpp"
#include "sdfrecon/scene.hpp"

#include <filesystem>
#include <fstream>
#include <map>

using namespace sdfrecon;

namespace {

BatchField sphere_field(double r = 0.5) {
  return batch_field([r](const Vec3& x) { return x.norm() - r; });
}

double signed_volume(const Mesh& m) {
  double v = 0;
  for (const auto& t : m.triangles) {
    const Vec3& a = m.vertices[std::size_t(t[0])];
    const Vec3& b = m.vertices[std::size_t(t[1])];
    const Vec3& c = m.vertices[std::size_t(t[2])];
    v += a.dot(b.cross(c)) / 6.0;
  }
  return v;
}

}  // namespace

TEST_CASE("marching cubes: empty cases") {
  Mesh m = marching_cubes(batch_field([](const Vec3&) { return 1.0; }), 16, 1.0);
  CHECK(m.vertices.empty());
  CHECK(m.triangles.empty());
  m = marching_cubes(batch_field([](const Vec3&) { return -1.0; }), 16, 1.0);
  CHECK(m.triangles.empty());
  CHECK_THROWS_AS(marching_cubes(sphere_field(), 1, 1.0), std::invalid_argument);
}

TEST_CASE("marching cubes: sphere radii, watertightness, orientation") {
  Mesh m = marching_cubes(sphere_field(0.5), 128, 1.0);
  REQUIRE(!m.triangles.empty());
  const double tol = 1.5 * (2.0 / 128.0);
  for (const auto& v : m.vertices) CHECK(std::abs(v.norm() - 0.5) < tol);
  CHECK(is_watertight(m));
  CHECK(euler_characteristic(m) == 2);  // genus 0
  // outward orientation encloses positive volume close to the true value
  double vol = signed_volume(m);
  CHECK(vol > 0);
  CHECK(vol == doctest::Approx(4.0 / 3.0 * M_PI * 0.125).epsilon(0.01));
  // no degenerate triangles
  for (const auto& t : m.triangles) {
    const Vec3& a = m.vertices[std::size_t(t[0])];
    double area = 0.5 * (m.vertices[std::size_t(t[1])] - a)
                            .cross(m.vertices[std::size_t(t[2])] - a)
                            .norm();
    CHECK(area > 1e-12);
  }
}

TEST_CASE("marching cubes: interpolated vertices sit near the zero set") {
  auto scene = AnalyticScene::preset("torus");
  Mesh m = marching_cubes(batch_field([&](const Vec3& x) { return scene.eval(x); }), 96, 1.0);
  REQUIRE(!m.triangles.empty());
  CHECK(is_watertight(m));
  CHECK(euler_characteristic(m) == 0);  // genus 1
  const double cell_diag = std::sqrt(3.0) * 2.0 / 95.0;
  for (const auto& v : m.vertices) CHECK(std::abs(scene.eval(v)) < cell_diag);
}

TEST_CASE("marching cubes: halving the cell size tightens the sphere") {
  auto radial_err = [&](int res) {
    Mesh m = marching_cubes(sphere_field(0.5), res, 1.0);
    double worst = 0;
    for (const auto& v : m.vertices) worst = std::max(worst, std::abs(v.norm() - 0.5));
    return worst;
  };
  double e64 = radial_err(64), e128 = radial_err(128);
  CHECK(e64 / e128 > 1.8);
}

TEST_CASE("surface sampling: barycentric validity and area weighting") {
  Mesh tri;
  tri.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  tri.triangles = {{0, 1, 2}};
  auto pts = sample_surface_points(tri, 500, 9);
  for (const auto& p : pts) {
    CHECK(p.x() >= -1e-12);
    CHECK(p.y() >= -1e-12);
    CHECK(p.x() + p.y() <= 1 + 1e-12);
    CHECK(p.z() == 0.0);
  }

  // two triangles with area ratio 9:1
  Mesh two;
  two.vertices = {Vec3(0, 0, 0), Vec3(9, 0, 0), Vec3(0, 1, 0),
                  Vec3(10, 0, 0), Vec3(11, 0, 0), Vec3(10, 1, 0)};
  two.triangles = {{0, 1, 2}, {3, 4, 5}};
  const int n = 100000;
  auto samples = sample_surface_points(two, n, 12345);
  int big = 0;
  for (const auto& p : samples)
    if (p.x() < 9.5) ++big;
  double frac = double(big) / n;
  double sigma = std::sqrt(0.9 * 0.1 / n);
  CHECK(std::abs(frac - 0.9) < 3 * sigma);

  // sphere mesh: mean radius ~ r
  Mesh sph = marching_cubes(sphere_field(0.5), 64, 1.0);
  auto ball = sample_surface_points(sph, 10000, 7);
  double mean = 0;
  for (const auto& p : ball) mean += p.norm();
  mean /= double(ball.size());
  CHECK(std::abs(mean - 0.5) < 0.01);

  // determinism
  auto again = sample_surface_points(two, 100, 77);
  auto again2 = sample_surface_points(two, 100, 77);
  for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i] == again2[i]);

  CHECK_THROWS_AS(sample_surface_points(Mesh{}, 10, 0), std::invalid_argument);
}

TEST_CASE("ply round trip and diagnostics") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "sdfrecon_test_ply";
  fs::create_directories(dir);
  auto path = (dir / "m.ply").string();

  Mesh m = marching_cubes(sphere_field(0.4), 24, 1.0);
  write_ply(m, path);
  Mesh r = read_ply(path);
  REQUIRE(r.vertices.size() == m.vertices.size());
  REQUIRE(r.triangles == m.triangles);
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    CHECK((r.vertices[i] - m.vertices[i]).norm() < 1e-6);

  // empty mesh is a valid file
  write_ply(Mesh{}, path);
  Mesh e = read_ply(path);
  CHECK(e.vertices.empty());
  CHECK(e.triangles.empty());

  // truncation names the missing element
  write_ply(m, path);
  std::ifstream in(path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::ofstream out(path);
  out.write(all.data(), std::streamsize(all.size() / 2));
  out.close();
  try {
    read_ply(path);
    FAIL("expected FormatError");
  } catch (const FormatError& err) {
    std::string msg = err.what();
    bool names_element = msg.find("vertex") != std::string::npos ||
                         msg.find("face") != std::string::npos;
    CHECK(names_element);
  }
}
