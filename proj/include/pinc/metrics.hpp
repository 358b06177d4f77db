#pragma once

// Reconstruction quality metrics.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pinc/common.hpp"
#include "pinc/mesh.hpp"
#include "pinc/network.hpp"
#include "pinc/rng.hpp"
#include "pinc/sampler.hpp"
#include "pinc/spatial.hpp"

namespace pinc {

namespace detail {
inline void require_points(std::span<const Vec3> x, const char* what) {
  if (x.empty()) throw UsageError(std::string(what) + " point set is empty");
}

/// Nearest-neighbour distance from each point of x into y.
inline std::vector<double> nn_distances(std::span<const Vec3> x, std::span<const Vec3> y) {
  const PointGrid grid(y);
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = grid.nearest(x[i]).first;
  return d;
}

inline std::vector<double> nn_distances_brute(std::span<const Vec3> x, std::span<const Vec3> y) {
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = nearest_distance_brute(x[i], y);
  return d;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double d : v) s += d;
  return s / static_cast<double>(v.size());
}

inline double max(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }
}  // namespace detail

/// Mean over x of the distance to the nearest point of y.
inline double chamfer_one_sided(std::span<const Vec3> x, std::span<const Vec3> y) {
  detail::require_points(x, "first");
  detail::require_points(y, "second");
  return detail::mean(detail::nn_distances(x, y));
}

inline double chamfer(std::span<const Vec3> x, std::span<const Vec3> y) {
  return 0.5 * (chamfer_one_sided(x, y) + chamfer_one_sided(y, x));
}

/// Max over x of the distance to the nearest point of y.
inline double hausdorff_one_sided(std::span<const Vec3> x, std::span<const Vec3> y) {
  detail::require_points(x, "first");
  detail::require_points(y, "second");
  return detail::max(detail::nn_distances(x, y));
}

enum class HausdorffRule {
  max_of_sides,  // standard symmetric Hausdorff
  sum_of_sides,  // sum of the two one-sided values
};

inline double hausdorff(std::span<const Vec3> x, std::span<const Vec3> y,
                        HausdorffRule rule = HausdorffRule::max_of_sides) {
  const double a = hausdorff_one_sided(x, y);
  const double b = hausdorff_one_sided(y, x);
  return rule == HausdorffRule::max_of_sides ? std::max(a, b) : a + b;
}

struct DistanceReport {
  double chamfer_xy = 0.0;
  double chamfer_yx = 0.0;
  double chamfer = 0.0;
  double hausdorff_xy = 0.0;
  double hausdorff_yx = 0.0;
  double hausdorff = 0.0;
  double hausdorff_sum = 0.0;
};

/// All distances from one pair of nearest-neighbour sweeps.
inline DistanceReport distance_report(std::span<const Vec3> x, std::span<const Vec3> y, bool brute_force = false) {
  detail::require_points(x, "first");
  detail::require_points(y, "second");
  const auto dxy = brute_force ? detail::nn_distances_brute(x, y) : detail::nn_distances(x, y);
  const auto dyx = brute_force ? detail::nn_distances_brute(y, x) : detail::nn_distances(y, x);
  DistanceReport r;
  r.chamfer_xy = detail::mean(dxy);
  r.chamfer_yx = detail::mean(dyx);
  r.chamfer = 0.5 * (r.chamfer_xy + r.chamfer_yx);
  r.hausdorff_xy = detail::max(dxy);
  r.hausdorff_yx = detail::max(dyx);
  r.hausdorff = std::max(r.hausdorff_xy, r.hausdorff_yx);
  r.hausdorff_sum = r.hausdorff_xy + r.hausdorff_yx;
  return r;
}

/// Mean |G(x_i) . n_i|.
inline double normal_consistency(std::span<const Vec3> g, std::span<const Vec3> normals) {
  if (g.size() != normals.size()) throw UsageError("field and normal counts differ");
  detail::require_points(g, "field");
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += std::abs(dot(g[i], normals[i]));
  return s / static_cast<double>(g.size());
}

/// Area-weighted triangle choice, then a uniform point in the triangle.
inline std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, std::size_t count, Rng& rng) {
  if (mesh.triangles.empty()) throw UsageError("cannot sample an empty mesh");
  std::vector<double> cdf;
  cdf.reserve(mesh.triangles.size());
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    total += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    cdf.push_back(total);
  }
  if (!(total > 0.0)) throw UsageError("mesh has zero surface area");
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double r = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
    if (it == cdf.end()) --it;
    const auto& t = mesh.triangles[static_cast<std::size_t>(it - cdf.begin())];
    double a = rng.uniform();
    double b = rng.uniform();
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Vec3& p0 = mesh.vertices[t[0]];
    out.push_back(p0 + a * (mesh.vertices[t[1]] - p0) + b * (mesh.vertices[t[2]] - p0));
  }
  return out;
}

/// Mean squared difference of two u heads on the resolution^3 corner lattice
/// of [-half_width, half_width]^3.
inline double field_mse(const Mlp& net_a, std::span<const double> params_a, const Mlp& net_b,
                        std::span<const double> params_b, int resolution = 100,
                        double half_width = kDomainHalfWidth) {
  if (resolution < 2) throw ConfigError("MSE lattice resolution must be at least 2");
  const double h = 2.0 * half_width / static_cast<double>(resolution - 1);
  const auto r = static_cast<Eigen::Index>(resolution);
  double sum = 0.0;
  Eigen::Matrix3Xd pts(3, r * r);
  for (Eigen::Index k = 0; k < r; ++k) {
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < r; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) {
        pts.col(c++) = Eigen::Vector3d(-half_width + h * static_cast<double>(i), -half_width + h * static_cast<double>(j),
                                       -half_width + h * static_cast<double>(k));
      }
    }
    const Eigen::MatrixXd ua = net_a.values(params_a, pts);
    const Eigen::MatrixXd ub = net_b.values(params_b, pts);
    sum += (ua.row(0) - ub.row(0)).squaredNorm();
  }
  return sum / static_cast<double>(r * r * r);
}

}  // namespace pinc
