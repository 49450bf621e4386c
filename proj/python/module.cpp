#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sdfrecon/dataset.hpp"
#include "sdfrecon/losses.hpp"
#include "sdfrecon/mesh.hpp"
#include "sdfrecon/metrics.hpp"
#include "sdfrecon/renderer.hpp"
#include "sdfrecon/train.hpp"

namespace py = pybind11;
using namespace sdfrecon;

namespace {

Camera camera_from_kwargs(const std::string& model, double focal) {
  Camera cam;
  cam.model = model == "orthographic" ? CameraModel::kOrthographic : CameraModel::kPerspective;
  cam.focal = focal;
  cam.width = 64;
  cam.height = 64;
  return cam;
}

std::vector<uint8_t> mask_from_array(const py::array_t<bool>& mask, int& w, int& h) {
  if (mask.ndim() != 2) throw std::invalid_argument("mask must be 2-D");
  h = int(mask.shape(0));
  w = int(mask.shape(1));
  auto view = mask.unchecked<2>();
  std::vector<uint8_t> m(std::size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m[std::size_t(y) * w + x] = view(y, x) ? 1 : 0;
  return m;
}

py::array_t<double> grid_to_array(const std::vector<double>& v, int h, int w) {
  py::array_t<double> out({h, w});
  auto r = out.mutable_unchecked<2>();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) r(y, x) = v[std::size_t(y) * w + x];
  return out;
}

MatX<float> points_to_cols(const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
  if (pts.ndim() != 2 || pts.shape(1) != 3)
    throw std::invalid_argument("points must have shape (n, 3)");
  auto view = pts.unchecked<2>();
  MatX<float> cols(3, pts.shape(0));
  for (py::ssize_t i = 0; i < pts.shape(0); ++i)
    for (int k = 0; k < 3; ++k) cols(k, i) = float(view(i, k));
  return cols;
}

PointCloud cloud_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
  if (pts.ndim() != 2 || pts.shape(1) != 3)
    throw std::invalid_argument("points must have shape (n, 3)");
  auto view = pts.unchecked<2>();
  PointCloud pc;
  pc.points.reserve(std::size_t(pts.shape(0)));
  for (py::ssize_t i = 0; i < pts.shape(0); ++i)
    pc.points.emplace_back(view(i, 0), view(i, 1), view(i, 2));
  return pc;
}

py::array_t<double> cloud_to_array(const std::vector<Vec3>& pts) {
  py::array_t<double> out({py::ssize_t(pts.size()), py::ssize_t(3)});
  auto r = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) r(py::ssize_t(i), k) = pts[i][k];
  return out;
}

// Keeps loaded parameters alive across calls from python.
struct Field {
  FieldParams<float> params;

  explicit Field(const std::string& ckpt) : params(load_checkpoint<float>(ckpt)) {}
  Field(int width, int levels, uint64_t seed)
      : params(FieldParams<float>::init({.width = width, .pe_levels = levels}, seed)) {}

  py::array_t<double> sdf(const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) const {
    MatX<float> cols = points_to_cols(pts);
    MatX<float> f = eval_sdf_batch(params, cols);
    py::array_t<double> out(pts.shape(0));
    auto r = out.mutable_unchecked<1>();
    for (py::ssize_t i = 0; i < pts.shape(0); ++i) r(i) = double(f(0, i));
    return out;
  }

  py::array_t<double> sdf_grad(const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) const {
    MatX<float> cols = points_to_cols(pts);
    MatX<float> f, g;
    eval_sdf_grad_batch(params, cols, f, g);
    py::array_t<double> out({pts.shape(0), py::ssize_t(3)});
    auto r = out.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < pts.shape(0); ++i)
      for (int k = 0; k < 3; ++k) r(i, k) = double(g(k, i));
    return out;
  }

  py::array_t<double> rgb(const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) const {
    MatX<float> cols = points_to_cols(pts);
    MatX<float> c = eval_rgb_batch(params, cols);
    py::array_t<double> out({pts.shape(0), py::ssize_t(3)});
    auto r = out.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < pts.shape(0); ++i)
      for (int k = 0; k < 3; ++k) r(i, k) = double(c(k, i));
    return out;
  }

  void save(const std::string& path) const { save_checkpoint(params, path); }
  int64_t param_count() const { return params.cfg.param_count(); }
  double pretrain(double radius, int iters, int points, double lr, uint64_t seed) {
    return pretrain_sphere(params, radius, iters, points, lr, seed);
  }
};

std::pair<py::array_t<double>, py::array_t<int>> mesh_to_arrays(const Mesh& mesh) {
  py::array_t<int> faces({py::ssize_t(mesh.triangles.size()), py::ssize_t(3)});
  auto f = faces.mutable_unchecked<2>();
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
    for (int k = 0; k < 3; ++k) f(py::ssize_t(i), k) = mesh.triangles[i][std::size_t(k)];
  return {cloud_to_array(mesh.vertices), faces};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SDF reconstruction from silhouettes: C++ core bindings";

  m.def(
      "distance_transform",
      [](const py::array_t<bool>& mask) {
        int w, h;
        auto data = mask_from_array(mask, w, h);
        SilhouetteMap sil = distance_transform(data, w, h);
        return py::make_tuple(grid_to_array(sil.dist_exterior, h, w),
                              grid_to_array(sil.dist_interior, h, w));
      },
      py::arg("mask"),
      "Exact two-sided Euclidean distance transform (pixel units); returns "
      "(dist_exterior, dist_interior).");

  m.def(
      "importance_weights",
      [](const py::array_t<bool>& mask, const std::string& side) {
        int w, h;
        auto data = mask_from_array(mask, w, h);
        SilhouetteMap sil = distance_transform(data, w, h);
        auto wts = importance_weights(
            sil, side == "interior" ? Side::kInterior : Side::kExterior);
        return grid_to_array(wts, h, w);
      },
      py::arg("mask"), py::arg("side") = "exterior");

  m.def(
      "sdf_lower_bound",
      [](double ux, double uy, double z, double d, const std::string& model, double focal) {
        return sdf_lower_bound(Vec2(ux, uy), z, d, camera_from_kwargs(model, focal));
      },
      py::arg("ux"), py::arg("uy"), py::arg("z"), py::arg("d"),
      py::arg("model") = "perspective", py::arg("focal") = 1.0,
      "Closed-form SDF lower bound at the back-projected point of (u, z).");

  m.def("sdf_lower_bound_finite_focal", [](double ux, double uy, double z, double d, double f) {
    return sdf_lower_bound_finite_focal(Vec2(ux, uy), z, d, f);
  });

  m.def(
      "chamfer",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& gt,
         bool squared) {
        auto r = chamfer(cloud_from_array(pred), cloud_from_array(gt), squared);
        return py::make_tuple(r.accuracy, r.coverage);
      },
      py::arg("pred"), py::arg("gt"), py::arg("squared") = false,
      "Bidirectional Chamfer distance: (accuracy, coverage).");

  m.def(
      "icp_register",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& src,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& dst, int iters) {
        IcpResult r = icp_register(cloud_from_array(src), cloud_from_array(dst), iters);
        Eigen::Matrix3d rot = r.R;
        Eigen::Vector3d t = r.t;
        return py::make_tuple(rot, t, cloud_to_array(r.registered.points));
      },
      py::arg("src"), py::arg("dst"), py::arg("iterations") = 50);

  m.def(
      "marching_cubes_scene",
      [](const std::string& preset, int resolution, double roi) {
        AnalyticScene scene = AnalyticScene::preset(preset);
        Mesh mesh = marching_cubes(
            batch_field([&scene](const Vec3& x) { return scene.eval(x); }), resolution, roi);
        return mesh_to_arrays(mesh);
      },
      py::arg("preset"), py::arg("resolution") = 64, py::arg("roi") = 1.0,
      "Triangulate the zero set of a built-in analytic scene: (vertices, faces).");

  m.def(
      "marching_cubes_field",
      [](const Field& f, int resolution, double roi) {
        Mesh mesh = marching_cubes(batch_field(f.params), resolution, roi);
        return mesh_to_arrays(mesh);
      },
      py::arg("field"), py::arg("resolution") = 64, py::arg("roi") = 1.0);

  m.def(
      "sample_surface",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& verts,
         const py::array_t<int, py::array::c_style | py::array::forcecast>& faces, int n,
         uint64_t seed) {
        Mesh mesh;
        auto v = verts.unchecked<2>();
        for (py::ssize_t i = 0; i < verts.shape(0); ++i)
          mesh.vertices.emplace_back(v(i, 0), v(i, 1), v(i, 2));
        auto fidx = faces.unchecked<2>();
        for (py::ssize_t i = 0; i < faces.shape(0); ++i)
          mesh.triangles.push_back({fidx(i, 0), fidx(i, 1), fidx(i, 2)});
        return cloud_to_array(sample_surface_points(mesh, n, seed));
      },
      py::arg("vertices"), py::arg("faces"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "scene_eval",
      [](const std::string& preset,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
        AnalyticScene scene = AnalyticScene::preset(preset);
        auto view = pts.unchecked<2>();
        py::array_t<double> out(pts.shape(0));
        auto r = out.mutable_unchecked<1>();
        for (py::ssize_t i = 0; i < pts.shape(0); ++i)
          r(i) = scene.eval(Vec3(view(i, 0), view(i, 1), view(i, 2)));
        return out;
      },
      py::arg("preset"), py::arg("points"));

  m.def(
      "positional_encoding",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pts, int levels) {
        Tape<double> tape;
        MatX<double> cols = points_to_cols(pts).cast<double>();
        auto enc = tape.value(tape.posenc(tape.constant(cols), levels));
        py::array_t<double> out({py::ssize_t(enc.cols()), py::ssize_t(enc.rows())});
        auto r = out.mutable_unchecked<2>();
        for (py::ssize_t i = 0; i < enc.cols(); ++i)
          for (py::ssize_t k = 0; k < enc.rows(); ++k) r(i, k) = enc(k, i);
        return out;
      },
      py::arg("points"), py::arg("levels") = 6);

  py::class_<Field>(m, "Field", "Learned implicit field loaded from a checkpoint")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def(py::init<int, int, uint64_t>(), py::arg("width") = 128, py::arg("levels") = 6,
           py::arg("seed") = 0)
      .def("sdf", &Field::sdf, py::arg("points"))
      .def("sdf_grad", &Field::sdf_grad, py::arg("points"))
      .def("rgb", &Field::rgb, py::arg("points"))
      .def("save", &Field::save, py::arg("path"))
      .def("pretrain_sphere", &Field::pretrain, py::arg("radius") = 0.5,
           py::arg("iterations") = 2000, py::arg("points") = 10000, py::arg("lr") = 1e-3,
           py::arg("seed") = 0)
      .def_property_readonly("param_count", &Field::param_count);
}
