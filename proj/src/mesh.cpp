#include "sdfrecon/mesh.hpp"

#include "sdfrecon/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace sdfrecon {

extern const int kMcEdgeMask[256];
extern const int8_t kMcTriangles[256][16];

BatchField batch_field(const std::function<double(const Vec3&)>& f) {
  return [f](const Eigen::Matrix3Xd& pts, Eigen::VectorXd& out) {
    out.resize(pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) out[i] = f(pts.col(i));
  };
}

namespace {

// (corner a, corner b) per cell edge, canonical numbering.
constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
// Corner offsets (dx, dy, dz).
constexpr int kCornerOfs[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                  {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// Global grid-edge key: axis (0=x,1=y,2=z) plus the base grid point.
constexpr int kEdgeAxis[12] = {0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2};
constexpr int kEdgeBase[12] = {0, 1, 3, 0, 4, 5, 7, 4, 0, 1, 2, 3};

}  // namespace

Mesh marching_cubes(const BatchField& field, int resolution, double roi_halfwidth) {
  if (resolution < 2) throw std::invalid_argument("marching_cubes: resolution must be >= 2");
  const int res = resolution;
  const double h = roi_halfwidth;
  auto coord = [&](int i) { return -h + 2.0 * h * i / (res - 1); };

  // Sample one z-slab at a time, keeping two in flight.
  auto sample_slab = [&](int k, Eigen::VectorXd& out) {
    Eigen::Matrix3Xd pts(3, Eigen::Index(res) * res);
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        Eigen::Index c = Eigen::Index(j) * res + i;
        pts(0, c) = coord(i);
        pts(1, c) = coord(j);
        pts(2, c) = coord(k);
      }
    field(pts, out);
    // keep interpolation parameters strictly inside (0,1)
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (std::abs(out[i]) < 1e-12) out[i] = 1e-12;
  };

  Mesh mesh;
  std::unordered_map<int64_t, int> edge_vertex;
  auto edge_key = [&](int axis, int i, int j, int k) {
    return ((int64_t(axis) * res + k) * res + j) * res + i;
  };

  Eigen::VectorXd slab0, slab1;
  sample_slab(0, slab0);
  for (int k = 0; k + 1 < res; ++k) {
    sample_slab(k + 1, slab1);
    const Eigen::VectorXd* slabs[2] = {&slab0, &slab1};
    for (int j = 0; j + 1 < res; ++j) {
      for (int i = 0; i + 1 < res; ++i) {
        double val[8];
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const int* o = kCornerOfs[c];
          val[c] = (*slabs[o[2]])[Eigen::Index(j + o[1]) * res + (i + o[0])];
          if (val[c] < 0.0) cube |= 1 << c;
        }
        int mask = kMcEdgeMask[cube];
        if (mask == 0) continue;

        int vtx_of_edge[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mask & (1 << e))) continue;
          const int* base = kCornerOfs[kEdgeBase[e]];
          int64_t key = edge_key(kEdgeAxis[e], i + base[0], j + base[1], k + base[2]);
          auto it = edge_vertex.find(key);
          if (it == edge_vertex.end()) {
            int a = kEdgeCorner[e][0], b = kEdgeCorner[e][1];
            double t = val[a] / (val[a] - val[b]);
            Vec3 pa(coord(i + kCornerOfs[a][0]), coord(j + kCornerOfs[a][1]),
                    coord(k + kCornerOfs[a][2]));
            Vec3 pb(coord(i + kCornerOfs[b][0]), coord(j + kCornerOfs[b][1]),
                    coord(k + kCornerOfs[b][2]));
            it = edge_vertex.emplace(key, int(mesh.vertices.size())).first;
            mesh.vertices.push_back(pa + t * (pb - pa));
          }
          vtx_of_edge[e] = it->second;
        }

        const int8_t* tri = kMcTriangles[cube];
        for (int t = 0; tri[t] >= 0; t += 3) {
          // reversed winding: outward normals with "inside = negative"
          int a = vtx_of_edge[tri[t]];
          int b = vtx_of_edge[tri[t + 2]];
          int c = vtx_of_edge[tri[t + 1]];
          if (a == b || b == c || a == c) continue;
          const Vec3& pa = mesh.vertices[std::size_t(a)];
          Vec3 cr = (mesh.vertices[std::size_t(b)] - pa).cross(mesh.vertices[std::size_t(c)] - pa);
          if (cr.norm() < 2e-12) continue;  // zero-area sliver
          mesh.triangles.push_back({a, b, c});
        }
      }
    }
    std::swap(slab0, slab1);
  }
  return mesh;
}

namespace {

int64_t undirected_edge(int a, int b) {
  if (a > b) std::swap(a, b);
  return (int64_t(a) << 32) | uint32_t(b);
}

}  // namespace

bool is_watertight(const Mesh& mesh) {
  std::unordered_map<int64_t, int> count;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) ++count[undirected_edge(t[e], t[(e + 1) % 3])];
  for (const auto& [edge, c] : count)
    if (c != 2) return false;
  return !mesh.triangles.empty();
}

int64_t euler_characteristic(const Mesh& mesh) {
  std::unordered_map<int64_t, int> edges;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) ++edges[undirected_edge(t[e], t[(e + 1) % 3])];
  return int64_t(mesh.vertices.size()) - int64_t(edges.size()) + int64_t(mesh.triangles.size());
}

double mesh_area(const Mesh& mesh) {
  double area = 0;
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[std::size_t(t[0])];
    area += 0.5 * (mesh.vertices[std::size_t(t[1])] - a)
                      .cross(mesh.vertices[std::size_t(t[2])] - a)
                      .norm();
  }
  return area;
}

std::vector<Vec3> sample_surface_points(const Mesh& mesh, int n, uint64_t seed) {
  if (mesh.triangles.empty()) throw std::invalid_argument("sample_surface_points: empty mesh");
  if (n < 1) throw std::invalid_argument("sample_surface_points: n must be >= 1");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    const Vec3& a = mesh.vertices[std::size_t(t[0])];
    total += 0.5 * (mesh.vertices[std::size_t(t[1])] - a)
                       .cross(mesh.vertices[std::size_t(t[2])] - a)
                       .norm();
    cumulative[i] = total;
  }
  RngStream rng(seed);
  std::vector<Vec3> pts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double r = rng.uniform() * total;
    std::size_t tri = std::size_t(
        std::lower_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
    if (tri >= mesh.triangles.size()) tri = mesh.triangles.size() - 1;
    const auto& t = mesh.triangles[tri];
    double su = std::sqrt(rng.uniform());
    double v = rng.uniform();
    double wa = 1.0 - su, wb = su * (1.0 - v), wc = su * v;
    pts[std::size_t(i)] = wa * mesh.vertices[std::size_t(t[0])] +
                          wb * mesh.vertices[std::size_t(t[1])] +
                          wc * mesh.vertices[std::size_t(t[2])];
  }
  return pts;
}

void write_ply(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  if (!out) throw IoError("short write: " + path);
}

namespace {

[[noreturn]] void ply_fail(const std::string& path, int line, const std::string& what) {
  throw FormatError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Mesh read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  int lineno = 0;
  auto next_line = [&](const char* expect) {
    if (!std::getline(in, line)) ply_fail(path, lineno, std::string("missing ") + expect);
    ++lineno;
    return line;
  };
  if (next_line("ply magic") != "ply") ply_fail(path, lineno, "not a PLY file");
  if (next_line("format line").rfind("format ascii", 0) != 0)
    ply_fail(path, lineno, "only ascii PLY is supported");

  std::size_t n_vertices = 0, n_faces = 0;
  std::vector<std::string> vertex_props;
  std::string current_element;
  while (true) {
    std::string l = next_line("end_header");
    if (l == "end_header") break;
    std::istringstream ss(l);
    std::string tok;
    ss >> tok;
    if (tok == "comment") continue;
    if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      current_element = name;
      if (name == "vertex") n_vertices = count;
      else if (name == "face") n_faces = count;
      else ply_fail(path, lineno, "unsupported element \"" + name + "\"");
    } else if (tok == "property") {
      if (current_element == "vertex") {
        std::string type, name;
        ss >> type >> name;
        vertex_props.push_back(name);
      }
    } else if (!tok.empty()) {
      ply_fail(path, lineno, "unexpected header token \"" + tok + "\"");
    }
  }
  int ix = -1, iy = -1, iz = -1;
  for (std::size_t i = 0; i < vertex_props.size(); ++i) {
    if (vertex_props[i] == "x") ix = int(i);
    if (vertex_props[i] == "y") iy = int(i);
    if (vertex_props[i] == "z") iz = int(i);
  }
  if (n_vertices > 0 && (ix < 0 || iy < 0 || iz < 0))
    ply_fail(path, lineno, "vertex element lacks x/y/z properties");

  Mesh mesh;
  mesh.vertices.reserve(n_vertices);
  for (std::size_t i = 0; i < n_vertices; ++i) {
    std::istringstream ss(next_line("vertex data"));
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (vals.size() < vertex_props.size())
      ply_fail(path, lineno, "vertex row has too few values");
    mesh.vertices.emplace_back(vals[std::size_t(ix)], vals[std::size_t(iy)],
                               vals[std::size_t(iz)]);
  }
  mesh.triangles.reserve(n_faces);
  for (std::size_t i = 0; i < n_faces; ++i) {
    std::istringstream ss(next_line("face data"));
    int cnt;
    if (!(ss >> cnt)) ply_fail(path, lineno, "face row is empty");
    if (cnt != 3) ply_fail(path, lineno, "only triangle faces are supported");
    std::array<int, 3> t{};
    for (int k = 0; k < 3; ++k) {
      if (!(ss >> t[std::size_t(k)])) ply_fail(path, lineno, "face row has too few indices");
      if (t[std::size_t(k)] < 0 || std::size_t(t[std::size_t(k)]) >= mesh.vertices.size())
        ply_fail(path, lineno, "face index out of range");
    }
    mesh.triangles.push_back(t);
  }
  return mesh;
}

}  // namespace sdfrecon
