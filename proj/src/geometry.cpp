#include "sdfrecon/geometry.hpp"

#include <json.hpp>

#include <cmath>

namespace sdfrecon {

using nlohmann::json;

void Camera::validate() const {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("Camera: nonpositive image size");
  if (!(focal > 0.0)) throw std::invalid_argument("Camera: focal must be positive");
  Mat3 gram = R.transpose() * R;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("Camera: R is not orthonormal");
  if (std::abs(R.determinant() - 1.0) > 1e-9)
    throw std::invalid_argument("Camera: det(R) != +1");
}

std::string Camera::to_json() const {
  json j;
  j["model"] = model == CameraModel::kPerspective ? "perspective" : "orthographic";
  j["focal"] = focal;
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[i * 3 + k] = R(i, k);  // row-major
  j["R"] = r;
  j["t"] = std::vector<double>{t.x(), t.y(), t.z()};
  j["width"] = width;
  j["height"] = height;
  return j.dump(2);
}

Camera Camera::from_json(const std::string& text) {
  json j = json::parse(text);
  Camera cam;
  std::string model = j.at("model").get<std::string>();
  if (model == "perspective") cam.model = CameraModel::kPerspective;
  else if (model == "orthographic") cam.model = CameraModel::kOrthographic;
  else throw std::invalid_argument("Camera: unknown model \"" + model + "\"");
  cam.focal = j.value("focal", 1.0);
  auto r = j.at("R").get<std::vector<double>>();
  if (r.size() != 9) throw std::invalid_argument("Camera: R must have 9 entries");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) cam.R(i, k) = r[i * 3 + k];
  auto tv = j.at("t").get<std::vector<double>>();
  if (tv.size() != 3) throw std::invalid_argument("Camera: t must have 3 entries");
  cam.t = Vec3(tv[0], tv[1], tv[2]);
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.validate();
  return cam;
}

Camera make_look_at_camera(const Vec3& center, const Vec3& target, CameraModel model,
                           int width, int height, double focal) {
  Vec3 forward = (target - center).normalized();
  Vec3 up(0, 0, 1);
  if (std::abs(forward.dot(up)) > 1.0 - 1e-9) up = Vec3(0, 1, 0);  // degenerate look direction
  Vec3 right = forward.cross(up).normalized();
  Vec3 down = forward.cross(right);  // y grows downward in the image
  Mat3 world_to_cam;
  world_to_cam.row(0) = right.transpose();
  world_to_cam.row(1) = down.transpose();
  world_to_cam.row(2) = forward.transpose();
  Camera cam;
  cam.model = model;
  cam.focal = focal;
  cam.R = world_to_cam.transpose();  // camera -> object
  cam.t = center;
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

Vec2 pixel_to_normalized(int ix, int iy, const Camera& cam) {
  if (ix < 0 || iy < 0 || ix >= cam.width || iy >= cam.height)
    throw std::out_of_range("pixel_to_normalized: index outside image");
  return Vec2((ix + 0.5) * 2.0 / cam.width - 1.0, (iy + 0.5) * 2.0 / cam.height - 1.0);
}

void normalized_to_pixel(const Vec2& u, const Camera& cam, int& ix, int& iy) {
  ix = int(std::lround((u.x() + 1.0) * cam.width / 2.0 - 0.5));
  iy = int(std::lround((u.y() + 1.0) * cam.height / 2.0 - 0.5));
}

Vec3 ray_direction(const Vec2& u, const Camera& cam) {
  if (cam.model == CameraModel::kOrthographic) return Vec3(0, 0, 1);
  return Vec3(u.x() / cam.focal, u.y() / cam.focal, 1.0);
}

Vec3 backproject(const Vec2& u, double z, const Camera& cam) {
  if (z < kNearDepth - 1e-12)
    throw std::invalid_argument("backproject: depth below near plane z = 1");
  if (cam.model == CameraModel::kOrthographic) return Vec3(u.x(), u.y(), z);
  if (cam.focal == 1.0) return z * Vec3(u.x(), u.y(), 1.0);
  double s = (z - 1.0 + cam.focal) / cam.focal;
  return s * Vec3(u.x(), u.y(), cam.focal);
}

Vec2 farthest_circle_point(const Vec2& u, double d) {
  if (d < 0.0) throw std::invalid_argument("farthest_circle_point: negative radius");
  double n = u.norm();
  if (n == 0.0) return Vec2(d, 0.0);
  return (1.0 + d / n) * u;
}

double sdf_lower_bound(const Vec2& u, double z, double d, const Camera& cam) {
  if (d < 0.0) throw std::invalid_argument("sdf_lower_bound: negative distance value");
  if (z < kNearDepth - 1e-12)
    throw std::invalid_argument("sdf_lower_bound: depth below near plane z = 1");
  if (cam.model == CameraModel::kOrthographic) return d;
  if (cam.focal != 1.0) return sdf_lower_bound_finite_focal(u, z, d, cam.focal);
  Vec2 v = farthest_circle_point(u, d);
  Vec3 ubar(u.x(), u.y(), 1.0);
  Vec3 vbar(v.x(), v.y(), 1.0);
  // b = z * || ubar - (vbar.ubar / vbar.vbar) vbar ||
  double proj = vbar.dot(ubar) / vbar.dot(vbar);
  return z * (ubar - proj * vbar).norm();
}

double sdf_lower_bound_finite_focal(const Vec2& u, double z, double d, double focal) {
  if (d < 0.0) throw std::invalid_argument("sdf_lower_bound_finite_focal: negative distance");
  if (!(focal > 0.0)) throw std::invalid_argument("sdf_lower_bound_finite_focal: focal <= 0");
  Vec2 v = farthest_circle_point(u, d);
  // Query point x(z) and cone generator x'(z') = a + z'*g; minimize ||x - x'||
  // over z' (linear least squares).
  Vec3 x = ((z - 1.0 + focal) / focal) * Vec3(u.x(), u.y(), focal);
  Vec3 vbar(v.x(), v.y(), focal);
  Vec3 g = vbar / focal;
  Vec3 a = ((focal - 1.0) / focal) * vbar;
  double zprime = g.dot(x - a) / g.dot(g);
  if (zprime < 0.0) zprime = 0.0;
  return (x - a - zprime * g).norm();
}

}  // namespace sdfrecon
