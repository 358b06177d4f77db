#pragma once

// Point-cloud preparation and per-iteration sampling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pinc/common.hpp"
#include "pinc/rng.hpp"
#include "pinc/spatial.hpp"

namespace pinc {

/// x_normalized = (x - center) / scale.
struct Affine {
  Vec3 center{0.0, 0.0, 0.0};
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return (1.0 / scale) * (x - center); }
  Vec3 invert(const Vec3& y) const { return scale * y + center; }
  bool is_identity() const { return scale == 1.0 && center == Vec3{0.0, 0.0, 0.0}; }

  friend bool operator==(const Affine&, const Affine&) = default;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or one unit normal per point
  std::vector<double> nn50_dist;

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
};

struct NormalizedCloud {
  PointCloud cloud;
  Affine affine;
};

inline constexpr double kScaleGuard = 1e-9;
inline constexpr std::size_t kNeighbourRank = 50;

/// Centers at the centroid and scales to unit maximum norm. Normals pass
/// through unchanged (the map is a uniform scaling).
inline NormalizedCloud normalize(std::span<const Vec3> raw, std::span<const Vec3> normals = {}) {
  if (raw.empty()) throw InputError("point cloud is empty");
  if (!normals.empty() && normals.size() != raw.size()) throw InputError("normal count does not match point count");
  Vec3 c{0.0, 0.0, 0.0};
  for (const Vec3& p : raw) {
    if (!is_finite(p)) throw InputError("point cloud contains a non-finite coordinate");
    c = c + p;
  }
  c = (1.0 / static_cast<double>(raw.size())) * c;
  double max_norm = 0.0;
  for (const Vec3& p : raw) max_norm = std::max(max_norm, norm(p - c));
  NormalizedCloud out;
  out.affine = {c, std::max(max_norm, kScaleGuard)};
  out.cloud.points.reserve(raw.size());
  for (const Vec3& p : raw) out.cloud.points.push_back(out.affine.apply(p));
  out.cloud.normals.assign(normals.begin(), normals.end());
  return out;
}

/// Distance from each point to its k-th nearest other point (k = 50,
/// clamped to size - 1). Exact; uses a uniform grid.
inline std::vector<double> precompute_nn50(std::span<const Vec3> points, std::size_t rank = kNeighbourRank) {
  std::vector<double> out(points.size(), 0.0);
  if (points.size() < 2) return out;
  const std::size_t k = std::min(rank, points.size() - 1);
  const PointGrid grid(points);
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = grid.kth_distance(points[i], k, i);
  return out;
}

/// O(N^2) reference for precompute_nn50.
inline std::vector<double> kth_neighbor_distance_brute(std::span<const Vec3> points,
                                                       std::size_t rank = kNeighbourRank) {
  std::vector<double> out(points.size(), 0.0);
  if (points.size() < 2) return out;
  const std::size_t k = std::min(rank, points.size() - 1);
  std::vector<double> d;
  for (std::size_t i = 0; i < points.size(); ++i) {
    d.clear();
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (j != i) d.push_back(distance(points[i], points[j]));
    }
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    out[i] = d[k - 1];
  }
  return out;
}

/// normalize() followed by the neighbour-distance precomputation.
inline NormalizedCloud prepare_cloud(std::span<const Vec3> raw, std::span<const Vec3> normals = {}) {
  NormalizedCloud n = normalize(raw, normals);
  n.cloud.nn50_dist = precompute_nn50(n.cloud.points);
  return n;
}

struct SurfaceBatch {
  std::vector<std::size_t> indices;
  std::vector<Vec3> points;
};

/// I.i.d. uniform draws with replacement.
inline SurfaceBatch sample_surface_batch(const PointCloud& cloud, std::size_t batch, Rng& rng) {
  if (cloud.points.empty()) throw UsageError("cannot sample from an empty cloud");
  SurfaceBatch b;
  b.indices.reserve(batch);
  b.points.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto k = static_cast<std::size_t>(rng.below(cloud.points.size()));
    b.indices.push_back(k);
    b.points.push_back(cloud.points[k]);
  }
  return b;
}

struct CollocationBatch {
  std::vector<Vec3> local;
  std::vector<Vec3> global_pts;

  std::vector<Vec3> all() const {
    std::vector<Vec3> v(local);
    v.insert(v.end(), global_pts.begin(), global_pts.end());
    return v;
  }
};

inline constexpr double kDomainHalfWidth = 1.1;

/// Local points: each surface sample displaced by N(0, nn50^2 I) of its source
/// point. Global points: uniform in [-eta, eta]^3.
inline CollocationBatch sample_collocation(const PointCloud& cloud, const SurfaceBatch& surface, std::size_t n_global,
                                           double eta, Rng& local_rng, Rng& global_rng) {
  if (cloud.nn50_dist.size() != cloud.points.size()) throw UsageError("cloud lacks neighbour distances");
  CollocationBatch c;
  c.local.reserve(surface.points.size());
  for (std::size_t i = 0; i < surface.points.size(); ++i) {
    const double s = cloud.nn50_dist[surface.indices[i]];
    const Vec3& p = surface.points[i];
    const double dx = local_rng.normal();
    const double dy = local_rng.normal();
    const double dz = local_rng.normal();
    c.local.push_back({p[0] + s * dx, p[1] + s * dy, p[2] + s * dz});
  }
  c.global_pts.reserve(n_global);
  for (std::size_t i = 0; i < n_global; ++i) {
    c.global_pts.push_back({global_rng.uniform(-eta, eta), global_rng.uniform(-eta, eta), global_rng.uniform(-eta, eta)});
  }
  return c;
}

/// Adds i.i.d. N(0, sigma^2) to every coordinate; normals are kept and the
/// neighbour distances recomputed.
inline PointCloud add_noise(const PointCloud& cloud, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
  PointCloud out = cloud;
  if (sigma > 0.0) {
    for (Vec3& p : out.points) {
      const double dx = rng.normal();
      const double dy = rng.normal();
      const double dz = rng.normal();
      p = {p[0] + sigma * dx, p[1] + sigma * dy, p[2] + sigma * dz};
    }
  }
  out.nn50_dist = precompute_nn50(out.points);
  return out;
}

}  // namespace pinc
