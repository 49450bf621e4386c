#include "sdfrecon/scene.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace sdfrecon {

using nlohmann::json;

struct AnalyticScene::Node {
  enum class Kind { kSphere, kBox, kTorus, kUnion, kSmoothUnion } kind;
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Zero();   // box
  double r0 = 0.0, r1 = 0.0;  // sphere/torus radii
  int axis = 1;               // torus
  double k = 0.0;             // smooth union radius
  std::shared_ptr<const Node> a, b;
};

namespace {

double eval_node(const AnalyticScene::Node& n, const Vec3& x);

double sd_sphere(const Vec3& p, double r) { return p.norm() - r; }

double sd_box(const Vec3& p, const Vec3& h) {
  Vec3 q = p.cwiseAbs() - h;
  double outside = q.cwiseMax(0.0).norm();
  double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

double sd_torus(const Vec3& p, double major, double minor, int axis) {
  int i = (axis + 1) % 3, j = (axis + 2) % 3;
  double ring = std::hypot(p[i], p[j]) - major;
  return std::hypot(ring, p[axis]) - minor;
}

double eval_node(const AnalyticScene::Node& n, const Vec3& x) {
  using Kind = AnalyticScene::Node::Kind;
  switch (n.kind) {
    case Kind::kSphere:
      return sd_sphere(x - n.center, n.r0);
    case Kind::kBox:
      return sd_box(x - n.center, n.half);
    case Kind::kTorus:
      return sd_torus(x - n.center, n.r0, n.r1, n.axis);
    case Kind::kUnion:
      return std::min(eval_node(*n.a, x), eval_node(*n.b, x));
    case Kind::kSmoothUnion: {
      double da = eval_node(*n.a, x);
      double db = eval_node(*n.b, x);
      double h = std::clamp(0.5 + 0.5 * (db - da) / n.k, 0.0, 1.0);
      return db + (da - db) * h - n.k * h * (1.0 - h);
    }
  }
  return 0.0;
}

bool exact_node(const AnalyticScene::Node& n) {
  using Kind = AnalyticScene::Node::Kind;
  if (n.kind == Kind::kSmoothUnion) return false;
  if (n.a && !exact_node(*n.a)) return false;
  if (n.b && !exact_node(*n.b)) return false;
  return true;
}

json node_to_json(const AnalyticScene::Node& n) {
  using Kind = AnalyticScene::Node::Kind;
  json j;
  switch (n.kind) {
    case Kind::kSphere:
      j["type"] = "sphere";
      j["center"] = {n.center.x(), n.center.y(), n.center.z()};
      j["radius"] = n.r0;
      break;
    case Kind::kBox:
      j["type"] = "box";
      j["center"] = {n.center.x(), n.center.y(), n.center.z()};
      j["half_extents"] = {n.half.x(), n.half.y(), n.half.z()};
      break;
    case Kind::kTorus:
      j["type"] = "torus";
      j["center"] = {n.center.x(), n.center.y(), n.center.z()};
      j["major"] = n.r0;
      j["minor"] = n.r1;
      j["axis"] = n.axis;
      break;
    case Kind::kUnion:
      j["type"] = "union";
      j["a"] = node_to_json(*n.a);
      j["b"] = node_to_json(*n.b);
      break;
    case Kind::kSmoothUnion:
      j["type"] = "smooth_union";
      j["k"] = n.k;
      j["a"] = node_to_json(*n.a);
      j["b"] = node_to_json(*n.b);
      break;
  }
  return j;
}

Vec3 vec_from(const json& j) {
  auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument("scene: expected 3-vector");
  return Vec3(v[0], v[1], v[2]);
}

std::shared_ptr<const AnalyticScene::Node> node_from_json(const json& j);

}  // namespace

AnalyticScene AnalyticScene::sphere(const Vec3& center, double radius) {
  if (radius <= 0) throw std::invalid_argument("sphere: radius must be positive");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kSphere;
  n->center = center;
  n->r0 = radius;
  AnalyticScene s;
  s.root_ = n;
  return s;
}

AnalyticScene AnalyticScene::box(const Vec3& center, const Vec3& half_extents) {
  if ((half_extents.array() <= 0).any())
    throw std::invalid_argument("box: half extents must be positive");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kBox;
  n->center = center;
  n->half = half_extents;
  AnalyticScene s;
  s.root_ = n;
  return s;
}

AnalyticScene AnalyticScene::torus(const Vec3& center, double major, double minor, int axis) {
  if (major <= 0 || minor <= 0 || minor >= major)
    throw std::invalid_argument("torus: need 0 < minor < major");
  if (axis < 0 || axis > 2) throw std::invalid_argument("torus: axis must be 0, 1 or 2");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kTorus;
  n->center = center;
  n->r0 = major;
  n->r1 = minor;
  n->axis = axis;
  AnalyticScene s;
  s.root_ = n;
  return s;
}

AnalyticScene AnalyticScene::join(AnalyticScene a, AnalyticScene b) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kUnion;
  n->a = a.root_;
  n->b = b.root_;
  AnalyticScene s;
  s.root_ = n;
  return s;
}

AnalyticScene AnalyticScene::smooth_join(AnalyticScene a, AnalyticScene b, double k) {
  if (k <= 0) throw std::invalid_argument("smooth_join: k must be positive");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kSmoothUnion;
  n->k = k;
  n->a = a.root_;
  n->b = b.root_;
  AnalyticScene s;
  s.root_ = n;
  return s;
}

AnalyticScene AnalyticScene::preset(const std::string& name) {
  if (name == "sphere") return sphere(Vec3::Zero(), 0.5);
  if (name == "torus") return torus(Vec3::Zero(), 0.5, 0.15, 1);
  if (name == "box") return box(Vec3::Zero(), Vec3(0.3, 0.3, 0.3));
  if (name == "spheres")
    return join(sphere(Vec3(-0.3, 0, 0), 0.3), sphere(Vec3(0.35, 0, 0), 0.25));
  if (name == "blend")
    return smooth_join(sphere(Vec3(-0.25, 0, 0), 0.3), sphere(Vec3(0.3, 0, 0), 0.25), 0.15);
  throw std::invalid_argument("unknown scene preset: " + name);
}

double AnalyticScene::eval(const Vec3& x) const {
  if (!root_) throw std::logic_error("AnalyticScene: empty");
  return eval_node(*root_, x);
}

Vec3 AnalyticScene::grad(const Vec3& x, double h) const {
  Vec3 g;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = h;
    g[k] = (eval(x + e) - eval(x - e)) / (2 * h);
  }
  return g;
}

bool AnalyticScene::exact() const { return root_ && exact_node(*root_); }

std::string AnalyticScene::to_json() const {
  if (!root_) throw std::logic_error("AnalyticScene: empty");
  return node_to_json(*root_).dump(2);
}

namespace {

std::shared_ptr<const AnalyticScene::Node> node_from_json(const json& j) {
  std::string type = j.at("type").get<std::string>();
  if (type == "sphere") {
    auto n = std::make_shared<AnalyticScene::Node>();
    n->kind = AnalyticScene::Node::Kind::kSphere;
    n->center = vec_from(j.at("center"));
    n->r0 = j.at("radius").get<double>();
    return n;
  }
  if (type == "box") {
    auto n = std::make_shared<AnalyticScene::Node>();
    n->kind = AnalyticScene::Node::Kind::kBox;
    n->center = vec_from(j.at("center"));
    n->half = vec_from(j.at("half_extents"));
    return n;
  }
  if (type == "torus") {
    auto n = std::make_shared<AnalyticScene::Node>();
    n->kind = AnalyticScene::Node::Kind::kTorus;
    n->center = vec_from(j.at("center"));
    n->r0 = j.at("major").get<double>();
    n->r1 = j.at("minor").get<double>();
    n->axis = j.value("axis", 1);
    return n;
  }
  if (type == "union" || type == "smooth_union") {
    auto n = std::make_shared<AnalyticScene::Node>();
    n->kind = type == "union" ? AnalyticScene::Node::Kind::kUnion
                              : AnalyticScene::Node::Kind::kSmoothUnion;
    if (type == "smooth_union") n->k = j.at("k").get<double>();
    n->a = node_from_json(j.at("a"));
    n->b = node_from_json(j.at("b"));
    return n;
  }
  throw std::invalid_argument("scene: unknown node type " + type);
}

}  // namespace

AnalyticScene AnalyticScene::from_json(const std::string& text) {
  json j = json::parse(text);
  AnalyticScene s;
  s.root_ = node_from_json(j);
  return s;
}

}  // namespace sdfrecon
