#include "sdfrecon/dataset.hpp"

#include "sdfrecon/renderer.hpp"
#include "sdfrecon/util.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace sdfrecon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_scene_fits(const AnalyticScene& scene) {
  // The optimization ROI is the unit cube; sample its walls.
  const int n = 33;
  for (int face = 0; face < 6; ++face) {
    int axis = face / 2;
    double side = face % 2 ? 1.0 : -1.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        Vec3 p;
        p[axis] = side;
        p[(axis + 1) % 3] = -1.0 + 2.0 * a / (n - 1);
        p[(axis + 2) % 3] = -1.0 + 2.0 * b / (n - 1);
        if (scene.eval(p) <= 0.0)
          throw std::invalid_argument("generate_dataset: scene does not fit the unit cube");
      }
  }
}

// Near-tangent rays can exhaust the sphere-tracing budget while crawling past
// a close surface (e.g. through the torus hole) and would be misreported as
// misses; the mask must agree with the analytic scene, so scan the remaining
// range for a sign interval and refine it.
TraceResult trace_hit_robust(const AnalyticScene& scene, const Camera& cam, const Vec2& u,
                             double z0, double zfar, const SynthConfig& cfg) {
  ScalarField field = [&scene](const Vec3& x) { return scene.eval(x); };
  TraceResult tr = sphere_trace(field, cam, u, z0, zfar, cfg.trace_steps, cfg.trace_tol);
  if (tr.hit || tr.depth > zfar) return tr;
  auto f_at = [&](double z) { return scene.eval(cam.to_object(backproject(u, z, cam))); };
  const int n = 8192;
  double lo = tr.depth;
  double flo = f_at(lo);
  for (int i = 1; i <= n; ++i) {
    double z = lo + (zfar - lo) * i / n;
    double f = f_at(z);
    if (flo > 0 && f < 0) {
      double a = lo + (zfar - lo) * (i - 1) / n;
      for (int k = 0; k < 40; ++k) {
        double mid = 0.5 * (a + z);
        (f_at(mid) > 0 ? a : z) = mid;
      }
      return {true, 0.5 * (a + z)};
    }
    flo = f;
  }
  return {false, zfar};
}

View render_view(const AnalyticScene& scene, const Camera& cam, const SynthConfig& cfg) {
  View view;
  view.cam = cam;
  const int res = cfg.resolution;
  ImageU8 mask;
  mask.width = res;
  mask.height = res;
  mask.channels = 1;
  mask.data.assign(std::size_t(res) * res, 0);
  view.rgb.width = res;
  view.rgb.height = res;
  view.rgb.channels = 3;
  view.rgb.data.assign(std::size_t(res) * res * 3, 255);  // white background
  DepthMap depth;
  depth.width = res;
  depth.height = res;
  depth.depth.assign(std::size_t(res) * res, std::numeric_limits<double>::quiet_NaN());

  const double z0 = march_start_depth(cam);
  const double zfar = cam.distance_to_origin() + 1.8;
  const Vec3 albedo(0.75, 0.55, 0.35);

  parallel_chunks(std::size_t(res) * res, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      int x = int(p % res), y = int(p / res);
      Vec2 u = pixel_to_normalized(x, y, cam);
      TraceResult tr = trace_hit_robust(scene, cam, u, z0, zfar, cfg);
      if (!tr.hit) continue;
      mask.data[p] = 255;
      depth.depth[p] = tr.depth;
      Vec3 hit_obj = cam.to_object(backproject(u, tr.depth, cam));
      Vec3 n = scene.grad(hit_obj).normalized();
      Vec3 ray_dir_obj = (cam.R * ray_direction(u, cam)).normalized();
      double lambert = std::max(0.0, n.dot(-ray_dir_obj));
      Vec3 c = albedo * (0.15 + 0.85 * lambert);
      for (int ch = 0; ch < 3; ++ch)
        view.rgb.data[p * 3 + std::size_t(ch)] =
            uint8_t(std::lround(std::clamp(c[ch], 0.0, 1.0) * 255.0));
    }
  });

  double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
  for (double d : depth.depth)
    if (std::isfinite(d)) {
      zmin = std::min(zmin, d);
      zmax = std::max(zmax, d);
    }
  if (!(zmin <= zmax)) zmin = zmax = 0.0;
  depth.zmin = zmin;
  depth.zmax = zmax;
  view.depth = std::move(depth);
  view.sil = distance_transform(mask.data, res, res);
  return view;
}

std::string view_name(const char* stem, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", stem, i, ext);
  return buf;
}

}  // namespace

Dataset generate_dataset(const AnalyticScene& scene, const SynthConfig& cfg) {
  if (cfg.n_views < 1) throw std::invalid_argument("generate_dataset: need at least one view");
  if (cfg.resolution < 8) throw std::invalid_argument("generate_dataset: resolution too small");
  check_scene_fits(scene);

  Dataset data;
  data.scene_json = scene.to_json();
  data.resolution = cfg.resolution;
  const double elev = cfg.elevation_deg * kPi / 180.0;
  for (int v = 0; v < cfg.n_views; ++v) {
    double azim = 2.0 * kPi * v / cfg.n_views;
    Vec3 center = cfg.camera_distance *
                  Vec3(std::cos(elev) * std::cos(azim), std::cos(elev) * std::sin(azim),
                       std::sin(elev));
    Camera cam = make_look_at_camera(center, Vec3::Zero(), cfg.model, cfg.resolution,
                                     cfg.resolution);
    data.views.push_back(render_view(scene, cam, cfg));
  }
  return data;
}

Dataset generate_dataset(const AnalyticScene& scene, const SynthConfig& cfg,
                         const std::string& out_dir) {
  Dataset data = generate_dataset(scene, cfg);
  fs::create_directories(out_dir);
  for (int v = 0; v < int(data.views.size()); ++v) {
    const View& view = data.views[std::size_t(v)];
    ImageU8 mask;
    mask.width = view.sil.width;
    mask.height = view.sil.height;
    mask.channels = 1;
    mask.data = view.sil.mask;
    for (auto& m : mask.data) m = m ? 255 : 0;
    write_pgm((fs::path(out_dir) / view_name("mask", v, "pgm")).string(), mask);
    write_ppm((fs::path(out_dir) / view_name("view", v, "ppm")).string(), view.rgb);
    write_depth_pgm((fs::path(out_dir) / view_name("depth", v, "pgm")).string(), *view.depth);
    std::ofstream cj((fs::path(out_dir) / view_name("camera", v, "json")).string());
    cj << view.cam.to_json() << "\n";
  }
  json manifest;
  manifest["scene"] = json::parse(data.scene_json);
  manifest["views"] = cfg.n_views;
  manifest["resolution"] = cfg.resolution;
  manifest["camera_distance"] = cfg.camera_distance;
  manifest["elevation_deg"] = cfg.elevation_deg;
  manifest["model"] = cfg.model == CameraModel::kPerspective ? "perspective" : "orthographic";
  manifest["seed"] = cfg.seed;
  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
  if (!mf) throw IoError("cannot write manifest.json in " + out_dir);
  return data;
}

Dataset load_dataset(const std::string& dir) {
  Dataset data;
  fs::path root(dir);
  if (!fs::exists(root / "manifest.json"))
    throw IoError("no manifest.json in " + dir);
  std::ifstream mf(root / "manifest.json");
  json manifest = json::parse(mf);
  int n_views = manifest.at("views").get<int>();
  data.resolution = manifest.at("resolution").get<int>();
  if (manifest.contains("scene")) data.scene_json = manifest["scene"].dump();

  for (int v = 0; v < n_views; ++v) {
    View view;
    std::ifstream cj(root / view_name("camera", v, "json"));
    if (!cj) throw IoError("missing " + view_name("camera", v, "json") + " in " + dir);
    std::string text((std::istreambuf_iterator<char>(cj)), std::istreambuf_iterator<char>());
    view.cam = Camera::from_json(text);
    ImageU8 mask = read_pgm((root / view_name("mask", v, "pgm")).string());
    for (auto& m : mask.data) m = m >= 128 ? 1 : 0;
    view.sil = distance_transform(mask.data, mask.width, mask.height);
    view.rgb = read_ppm((root / view_name("view", v, "ppm")).string());
    auto depth_path = root / view_name("depth", v, "pgm");
    if (fs::exists(depth_path)) view.depth = read_depth_pgm(depth_path.string());
    data.views.push_back(std::move(view));
  }
  return data;
}

}  // namespace sdfrecon
