#include "sdfrecon/metrics.hpp"

#include "sdfrecon/mesh.hpp"
#include "sdfrecon/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sdfrecon {

namespace {

// Same expression brute force uses, so pruning cannot change the result.
inline double dist_sq(const Vec3& a, const Vec3& b) {
  double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

constexpr int kLeafSize = 8;

}  // namespace

KdTree3::KdTree3(const std::vector<Vec3>& points) : pts_(points) {
  if (pts_.empty()) throw std::invalid_argument("KdTree3: empty point set");
  order_.resize(pts_.size());
  std::iota(order_.begin(), order_.end(), std::size_t(0));
  root_ = build(0, int(pts_.size()), 0);
}

int KdTree3::build(int begin, int end, int depth) {
  Node n;
  if (end - begin <= kLeafSize) {
    n.begin = begin;
    n.end = end;
    nodes_.push_back(n);
    return int(nodes_.size() - 1);
  }
  // Widest-spread axis keeps the tree balanced on skewed clouds.
  Vec3 lo = pts_[order_[std::size_t(begin)]], hi = lo;
  for (int i = begin; i < end; ++i) {
    const Vec3& p = pts_[order_[std::size_t(i)]];
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int axis;
  (hi - lo).maxCoeff(&axis);
  int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) { return pts_[a][axis] < pts_[b][axis]; });
  n.axis = axis;
  n.split = pts_[order_[std::size_t(mid)]][axis];
  int self = int(nodes_.size());
  nodes_.push_back(n);
  int left = build(begin, mid, depth + 1);
  int right = build(mid, end, depth + 1);
  nodes_[std::size_t(self)].left = left;
  nodes_[std::size_t(self)].right = right;
  return self;
}

void KdTree3::search(int node, const Vec3& q, double& best, std::size_t& best_idx) const {
  const Node& n = nodes_[std::size_t(node)];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      double d = dist_sq(q, pts_[order_[std::size_t(i)]]);
      if (d < best) {
        best = d;
        best_idx = order_[std::size_t(i)];
      }
    }
    return;
  }
  double delta = q[n.axis] - n.split;
  int near = delta < 0 ? n.left : n.right;
  int far = delta < 0 ? n.right : n.left;
  search(near, q, best, best_idx);
  if (delta * delta < best) search(far, q, best, best_idx);
}

double KdTree3::nearest_sq(const Vec3& query) const {
  double best = std::numeric_limits<double>::infinity();
  std::size_t idx = 0;
  search(root_, query, best, idx);
  return best;
}

std::size_t KdTree3::nearest_index(const Vec3& query) const {
  double best = std::numeric_limits<double>::infinity();
  std::size_t idx = 0;
  search(root_, query, best, idx);
  return idx;
}

ChamferResult chamfer(const PointCloud& pred, const PointCloud& gt, bool squared) {
  if (pred.points.empty() || gt.points.empty())
    throw std::invalid_argument("chamfer: empty point cloud");
  KdTree3 tree_gt(gt.points);
  KdTree3 tree_pred(pred.points);
  auto mean_dist = [&](const std::vector<Vec3>& from, const KdTree3& to) {
    std::vector<double> dists(from.size());
    parallel_chunks(from.size(), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        double d2 = to.nearest_sq(from[i]);
        dists[i] = squared ? d2 : std::sqrt(d2);
      }
    });
    double sum = 0;
    for (double d : dists) sum += d;
    return sum / double(from.size());
  };
  return {mean_dist(pred.points, tree_gt), mean_dist(gt.points, tree_pred)};
}

IcpResult icp_register(const PointCloud& src, const PointCloud& dst, int iterations) {
  if (src.points.size() < 3 || dst.points.size() < 3)
    throw std::invalid_argument("icp_register: need at least 3 points per cloud");
  KdTree3 tree(dst.points);

  IcpResult res;
  res.registered = src;
  auto& cur = res.registered.points;

  for (int it = 0; it < iterations; ++it) {
    // Correspondences from the current alignment.
    std::vector<std::size_t> match(cur.size());
    parallel_chunks(cur.size(), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) match[i] = tree.nearest_index(cur[i]);
    });

    Vec3 c_src = Vec3::Zero(), c_dst = Vec3::Zero();
    for (std::size_t i = 0; i < cur.size(); ++i) {
      c_src += cur[i];
      c_dst += dst.points[match[i]];
    }
    c_src /= double(cur.size());
    c_dst /= double(cur.size());

    Mat3 cov = Mat3::Zero();
    for (std::size_t i = 0; i < cur.size(); ++i)
      cov += (cur[i] - c_src) * (dst.points[match[i]] - c_dst).transpose();

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()(1) <= 1e-12 * svd.singularValues()(0))
      throw std::runtime_error("icp_register: degenerate (collinear) configuration");
    Mat3 u = svd.matrixU(), v = svd.matrixV();
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
    Mat3 r_step = v * flip * u.transpose();
    Vec3 t_step = c_dst - r_step * c_src;

    for (auto& p : cur) p = r_step * p + t_step;
    res.R = r_step * res.R;
    res.t = r_step * res.t + t_step;

    double acc = 0;
    for (const auto& p : cur) acc += std::sqrt(tree.nearest_sq(p));
    res.accuracy_trace.push_back(acc / double(cur.size()));
  }
  return res;
}

PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  PointCloud pc;
  std::vector<double> vals;
  double v;
  while (in >> v) vals.push_back(v);
  if (!in.eof() || vals.size() % 3 != 0)
    throw FormatError("malformed xyz data in " + path);
  for (std::size_t i = 0; i + 2 < vals.size(); i += 3)
    pc.points.emplace_back(vals[i], vals[i + 1], vals[i + 2]);
  return pc;
}

void write_xyz(const PointCloud& pc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  char buf[128];
  for (const auto& p : pc.points) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  if (!out) throw IoError("short write: " + path);
}

PointCloud load_point_cloud(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply") {
    Mesh m = read_ply(path);
    return {m.vertices};
  }
  return read_xyz(path);
}

}  // namespace sdfrecon
