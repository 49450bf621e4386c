#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sdfrecon/geometry.hpp"

namespace sdfrecon {

// Analytic SDF composition tree. Primitives are exact signed distances;
// plain union (min) is exact outside overlaps and a valid SDF lower bound
// inside; smooth union is a lower bound of min and flagged non-exact.
// Everything stays 1-Lipschitz.
class AnalyticScene {
 public:
  static AnalyticScene sphere(const Vec3& center, double radius);
  static AnalyticScene box(const Vec3& center, const Vec3& half_extents);
  // Ring of major radius R in the plane orthogonal to `axis` (0=x,1=y,2=z).
  static AnalyticScene torus(const Vec3& center, double major, double minor, int axis = 1);
  static AnalyticScene join(AnalyticScene a, AnalyticScene b);  // min
  static AnalyticScene smooth_join(AnalyticScene a, AnalyticScene b, double k);

  // Built-in scenes: "sphere", "torus", "box", "spheres", "blend".
  static AnalyticScene preset(const std::string& name);

  double eval(const Vec3& x) const;
  // Central finite differences; adequate for shading and oracle normals.
  Vec3 grad(const Vec3& x, double h = 1e-6) const;
  bool exact() const;  // false once a smooth join is involved

  std::string to_json() const;
  static AnalyticScene from_json(const std::string& text);

  struct Node;  // implementation detail, defined in scene.cpp

 private:
  AnalyticScene() = default;
  std::shared_ptr<const Node> root_;
};

}  // namespace sdfrecon
