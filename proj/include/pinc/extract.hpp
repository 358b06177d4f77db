#pragma once

// Zero-level-set extraction: lattice evaluation of u and marching cubes.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "pinc/common.hpp"
#include "pinc/detail/mc_tables.hpp"
#include "pinc/mesh.hpp"
#include "pinc/network.hpp"
#include "pinc/sampler.hpp"

namespace pinc {

/// Samples on the (resolution)^3 corner lattice of [lo, hi]^3, x fastest.
struct ScalarGrid {
  int resolution = 0;
  double lo = -kDomainHalfWidth;
  double hi = kDomainHalfWidth;
  std::vector<double> values;

  double spacing() const { return (hi - lo) / static_cast<double>(resolution - 1); }
  double coord(int i) const { return lo + spacing() * static_cast<double>(i); }
  Vec3 point(int i, int j, int k) const { return {coord(i), coord(j), coord(k)}; }
  std::size_t index(int i, int j, int k) const {
    const auto r = static_cast<std::size_t>(resolution);
    return static_cast<std::size_t>(i) + r * (static_cast<std::size_t>(j) + r * static_cast<std::size_t>(k));
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }

  void validate() const {
    if (resolution < 2) throw ConfigError("grid resolution must be at least 2");
    if (!(hi > lo)) throw ConfigError("grid bounds are empty");
    if (values.size() != static_cast<std::size_t>(resolution) * resolution * resolution) {
      throw ConfigError("grid value count does not match its resolution");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw NumericFault("grid contains a non-finite value");
    }
  }
};

/// Fills a grid from any callable Vec3 -> double.
template <class Fn>
ScalarGrid evaluate_grid(Fn&& fn, int resolution, double half_width = kDomainHalfWidth) {
  ScalarGrid g;
  g.resolution = resolution;
  g.lo = -half_width;
  g.hi = half_width;
  if (resolution < 2) throw ConfigError("grid resolution must be at least 2");
  g.values.resize(static_cast<std::size_t>(resolution) * resolution * resolution);
  for (int k = 0; k < resolution; ++k) {
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) g.values[g.index(i, j, k)] = fn(g.point(i, j, k));
    }
  }
  return g;
}

/// u head of a network on the lattice, evaluated in batches of whole slabs.
inline ScalarGrid evaluate_grid(const Mlp& net, std::span<const double> params, int resolution,
                                double half_width = kDomainHalfWidth) {
  ScalarGrid g;
  g.resolution = resolution;
  g.lo = -half_width;
  g.hi = half_width;
  if (resolution < 2) throw ConfigError("grid resolution must be at least 2");
  const auto r = static_cast<std::size_t>(resolution);
  g.values.resize(r * r * r);
  const std::size_t slab = r * r;
  const int slabs_per_batch = std::max<int>(1, static_cast<int>(16384 / slab));
  for (int k0 = 0; k0 < resolution; k0 += slabs_per_batch) {
    const int k1 = std::min(resolution, k0 + slabs_per_batch);
    Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(slab) * (k1 - k0));
    Eigen::Index c = 0;
    for (int k = k0; k < k1; ++k) {
      for (int j = 0; j < resolution; ++j) {
        for (int i = 0; i < resolution; ++i) {
          pts.col(c++) = Eigen::Vector3d(g.coord(i), g.coord(j), g.coord(k));
        }
      }
    }
    const Eigen::MatrixXd out = net.values(params, pts);
    for (Eigen::Index n = 0; n < out.cols(); ++n) g.values[static_cast<std::size_t>(k0) * slab + static_cast<std::size_t>(n)] = out(0, n);
  }
  return g;
}

inline constexpr double kMinTriangleArea = 1e-12;

/// Classic marching cubes with linear edge interpolation.
///
/// The field is taken as positive inside; triangles are wound so their normals
/// point towards decreasing values (outward). Set `flip_sign` for fields that
/// are negative inside. Vertices are shared along lattice edges, so closed
/// level sets away from the boundary give watertight meshes. An iso value
/// outside the sampled range yields an empty mesh.
inline TriangleMesh marching_cubes(const ScalarGrid& grid, double iso = 0.0, bool flip_sign = false) {
  grid.validate();
  static constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  static constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                       {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  const double sgn = flip_sign ? -1.0 : 1.0;
  const int r = grid.resolution;
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

  auto vertex_on = [&](int i, int j, int k, int e, const std::array<double, 8>& val) -> std::uint32_t {
    const int a = kEdge[e][0];
    const int b = kEdge[e][1];
    const int ia = i + kCorner[a][0], ja = j + kCorner[a][1], ka = k + kCorner[a][2];
    const int ib = i + kCorner[b][0], jb = j + kCorner[b][1], kb = k + kCorner[b][2];
    // Key the lattice edge by its lower corner and axis.
    const std::size_t lower = std::min(grid.index(ia, ja, ka), grid.index(ib, jb, kb));
    const int axis = ia != ib ? 0 : (ja != jb ? 1 : 2);
    const std::uint64_t key = static_cast<std::uint64_t>(lower) * 3 + static_cast<std::uint64_t>(axis);
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double t = (iso - val[static_cast<std::size_t>(a)]) / (val[static_cast<std::size_t>(b)] - val[static_cast<std::size_t>(a)]);
    const Vec3 pa = grid.point(ia, ja, ka);
    const Vec3 pb = grid.point(ib, jb, kb);
    mesh.vertices.push_back(pa + t * (pb - pa));
    const auto id = static_cast<std::uint32_t>(mesh.vertices.size() - 1);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < r; ++k) {
    for (int j = 0; j + 1 < r; ++j) {
      for (int i = 0; i + 1 < r; ++i) {
        std::array<double, 8> val;
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          val[static_cast<std::size_t>(c)] = sgn * grid.at(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (val[static_cast<std::size_t>(c)] < iso * sgn) cube |= 1 << c;
        }
        if (cube == 0 || cube == 255) continue;
        const auto& row = detail::kTriTable[static_cast<std::size_t>(cube)];
        for (int t = 0; row[static_cast<std::size_t>(t)] != -1; t += 3) {
          std::array<std::uint32_t, 3> tri;
          for (int q = 0; q < 3; ++q) {
            tri[static_cast<std::size_t>(q)] = vertex_on(i, j, k, row[static_cast<std::size_t>(t + q)], val);
          }
          if (triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]) <= kMinTriangleArea) {
            continue;
          }
          // Table winding already faces the below-iso (outer) side.
          mesh.triangles.push_back(tri);
        }
      }
    }
  }
  return mesh;
}

/// Maps a mesh from the normalized frame back to the input frame.
inline TriangleMesh de_normalize(TriangleMesh mesh, const Affine& affine) {
  for (Vec3& v : mesh.vertices) v = affine.invert(v);
  return mesh;
}

}  // namespace pinc
