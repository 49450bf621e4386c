#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sdfrecon/geometry.hpp"
#include "sdfrecon/net.hpp"

namespace sdfrecon {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

// Batched field evaluation: fills out[i] with the field at pts.col(i).
using BatchField = std::function<void(const Eigen::Matrix3Xd&, Eigen::VectorXd&)>;

BatchField batch_field(const std::function<double(const Vec3&)>& f);

template <typename T>
BatchField batch_field(const FieldParams<T>& params) {
  return [&params](const Eigen::Matrix3Xd& pts, Eigen::VectorXd& out) {
    MatX<T> p = pts.cast<T>();
    out = eval_sdf_batch(params, p).row(0).template cast<double>().transpose();
  };
}

// Zero-isosurface triangulation on a resolution^3 sample grid over the cube
// [-roi_halfwidth, roi_halfwidth]^3, with linear interpolation along cell
// edges and shared vertices per grid edge (deterministic ordering). An
// all-positive or all-negative field yields an empty mesh.
Mesh marching_cubes(const BatchField& field, int resolution, double roi_halfwidth = 1.0);

// Every edge incident to exactly two triangles.
bool is_watertight(const Mesh& mesh);
// V - E + F (E = distinct undirected edges).
int64_t euler_characteristic(const Mesh& mesh);
double mesh_area(const Mesh& mesh);

// Area-weighted uniform surface samples, reproducible from the seed.
std::vector<Vec3> sample_surface_points(const Mesh& mesh, int n, uint64_t seed);

// ASCII PLY with vertex/face elements. Parse failures report line numbers.
void write_ply(const Mesh& mesh, const std::string& path);
Mesh read_ply(const std::string& path);

}  // namespace sdfrecon
