#pragma once

#include <string>
#include <vector>

#include "sdfrecon/geometry.hpp"

namespace sdfrecon {

struct PointCloud {
  std::vector<Vec3> points;
};

// Static kd-tree over 3D points. Queries return the exact nearest squared
// distance (matching a brute-force scan bit for bit: identical arithmetic,
// only provably-farther subtrees are pruned).
class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Vec3>& points);
  double nearest_sq(const Vec3& query) const;
  std::size_t nearest_index(const Vec3& query) const;

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0;
    int begin = 0, end = 0;  // leaf point range
    int left = -1, right = -1;
  };
  void search(int node, const Vec3& q, double& best, std::size_t& best_idx) const;
  int build(int begin, int end, int depth);

  std::vector<Vec3> pts_;
  std::vector<std::size_t> order_;  // original indices
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct ChamferResult {
  double accuracy = 0.0;  // mean over pred of distance to nearest gt
  double coverage = 0.0;  // mean over gt of distance to nearest pred
};

// Bidirectional Chamfer distance; plain distances by default, squared when
// requested.
ChamferResult chamfer(const PointCloud& pred, const PointCloud& gt, bool squared = false);

struct IcpResult {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  PointCloud registered;               // R * src + t
  std::vector<double> accuracy_trace;  // chamfer accuracy after each iteration
};

// Rigid point-to-point ICP: nearest-neighbor correspondences alternated with
// the closed-form alignment (cross-covariance, orthogonal polar factor with
// det +1).
IcpResult icp_register(const PointCloud& src, const PointCloud& dst, int iterations = 50);

// Whitespace-separated x y z rows.
PointCloud read_xyz(const std::string& path);
void write_xyz(const PointCloud& pc, const std::string& path);
// Loads either an .xyz file or the vertices of an ASCII PLY.
PointCloud load_point_cloud(const std::string& path);

}  // namespace sdfrecon
