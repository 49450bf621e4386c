#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace sdfrecon {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr double kNearDepth = 1.0;  // rays are only queried at z >= 1

enum class CameraModel { kPerspective, kOrthographic };

// Calibrated camera. R/t map camera-frame points into the object frame
// (x_obj = R x_cam + t), so t is the camera center expressed in object
// coordinates. The principal point is fixed at the origin of the [-1,1]
// normalized image square (x right, y down).
struct Camera {
  CameraModel model = CameraModel::kPerspective;
  double focal = 1.0;  // normalized-image units
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  int width = 0;
  int height = 0;

  Vec3 to_object(const Vec3& x_cam) const { return R * x_cam + t; }
  Vec3 from_object(const Vec3& x_obj) const { return R.transpose() * (x_obj - t); }

  // Camera center in object coordinates and its distance to the origin.
  Vec3 center() const { return t; }
  double distance_to_origin() const { return t.norm(); }

  // Throws std::invalid_argument if R is not a proper rotation (1e-9) or the
  // image size is nonpositive.
  void validate() const;

  std::string to_json() const;
  static Camera from_json(const std::string& text);
};

// Camera whose axis points at `target` from `center`, y-down image frame,
// world +z treated as up.
Camera make_look_at_camera(const Vec3& center, const Vec3& target, CameraModel model,
                           int width, int height, double focal = 1.0);

// Pixel centers map onto the canonical [-1,1] square: u = (ix+0.5)*2/size - 1.
Vec2 pixel_to_normalized(int ix, int iy, const Camera& cam);
// Inverse of pixel_to_normalized on pixel centers.
void normalized_to_pixel(const Vec2& u, const Camera& cam, int& ix, int& iy);

// Homogeneous ray point for pixel u at depth z.
//   perspective (focal 1): z * [u; 1]
//   perspective (general): ((z - 1 + f)/f) * [u; f], so depth z = 1 is the image plane
//   orthographic:          [u; z]
Vec3 backproject(const Vec2& u, double z, const Camera& cam);

// Direction of the ray through u (the factor multiplying depth).
Vec3 ray_direction(const Vec2& u, const Camera& cam);

// The point on the circle of radius d around u that lies farthest from the
// principal point: v = (1 + d/|u|) u. For u = 0 the direction is +x (the
// value downstream is invariant to this choice).
Vec2 farthest_circle_point(const Vec2& u, double d);

// Closed-form lower bound on any valid SDF at the back-projected point of
// pixel u and depth z, given the free-space radius d around u (normalized
// units). Orthographic cameras give b = d; perspective cameras give the
// inscribed-sphere radius of the back-projected free cone.
double sdf_lower_bound(const Vec2& u, double z, double d, const Camera& cam);

// Same bound for an explicit focal length (perspective), used to take the
// orthographic limit. Reduces to sdf_lower_bound at focal = 1.
double sdf_lower_bound_finite_focal(const Vec2& u, double z, double d, double focal);

// Paper-facing alias for Camera::to_object.
inline Vec3 world_to_object(const Vec3& x, const Camera& cam) { return cam.to_object(x); }

}  // namespace sdfrecon
