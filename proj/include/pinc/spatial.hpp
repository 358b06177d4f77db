#pragma once

// Exact nearest-neighbour queries on a uniform grid.
//
// Cells are visited in growing Chebyshev rings around the query's cell. After
// each ring, every unvisited point lies beyond at least one face of the box
// covered so far, which bounds its distance from below; the search stops once
// the current answer is no larger than that bound. Distances are computed with
// pinc::distance, so results are bitwise equal to a brute-force scan.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "pinc/common.hpp"

namespace pinc {

class PointGrid {
 public:
  explicit PointGrid(std::span<const Vec3> points, double points_per_cell = 2.0) : points_(points) {
    if (points.empty()) return;
    lo_ = hi_ = points[0];
    for (const Vec3& p : points) {
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], p[a]);
        hi_[a] = std::max(hi_[a], p[a]);
      }
    }
    double extent = 0.0;
    for (int a = 0; a < 3; ++a) extent = std::max(extent, hi_[a] - lo_[a]);
    if (extent <= 0.0) extent = 1.0;
    // Size cells from the bounding-box volume, treating flat axes as thin slabs.
    double volume = 1.0;
    for (int a = 0; a < 3; ++a) volume *= std::max(hi_[a] - lo_[a], extent * 1e-3);
    cell_ = std::cbrt(volume * points_per_cell / static_cast<double>(points.size()));
    cell_ = std::max(cell_, extent / 1024.0);
    for (int a = 0; a < 3; ++a) {
      dims_[a] = std::clamp(static_cast<long>((hi_[a] - lo_[a]) / cell_) + 1, 1L, 1024L);
    }
    const std::size_t ncell = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    start_.assign(ncell + 1, 0);
    std::vector<std::size_t> cell_of(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      cell_of[i] = flat(cell_coords(points[i]));
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < ncell; ++c) start_[c + 1] += start_[c];
    order_.resize(points.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) order_[fill[cell_of[i]]++] = i;
  }

  bool empty() const { return points_.empty(); }

  /// (distance, index) of the nearest point; ties resolve to the lowest index.
  std::pair<double, std::size_t> nearest(const Vec3& q) const {
    if (points_.empty()) throw UsageError("nearest-neighbour query on an empty point set");
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    search(q, [&](std::size_t i) {
      const double d = distance(q, points_[i]);
      if (d < best || (d == best && i < best_i)) {
        best = d;
        best_i = i;
      }
    }, [&] { return best; });
    return {best, best_i};
  }

  /// Distance to the k-th nearest point other than index `self`
  /// (pass a value >= size() to exclude nothing).
  double kth_distance(const Vec3& q, std::size_t k, std::size_t self) const {
    if (k == 0) return 0.0;
    std::priority_queue<double> heap;
    search(q, [&](std::size_t i) {
      if (i == self) return;
      const double d = distance(q, points_[i]);
      if (heap.size() < k) {
        heap.push(d);
      } else if (d < heap.top()) {
        heap.pop();
        heap.push(d);
      }
    }, [&] { return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top(); });
    if (heap.size() < k) throw UsageError("k exceeds the number of available neighbours");
    return heap.top();
  }

 private:
  using Cell = std::array<long, 3>;

  Cell cell_coords(const Vec3& p) const {
    Cell c;
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp(static_cast<long>(std::floor((p[a] - lo_[a]) / cell_)), 0L, dims_[a] - 1);
    }
    return c;
  }
  std::size_t flat(const Cell& c) const { return static_cast<std::size_t>(c[0] + dims_[0] * (c[1] + dims_[1] * c[2])); }

  template <class Visit, class Radius>
  void search(const Vec3& q, Visit&& visit, Radius&& radius) const {
    const Cell c = cell_coords(q);
    const long max_ring = std::max({dims_[0], dims_[1], dims_[2]});
    for (long r = 0; r <= max_ring; ++r) {
      Cell lo, hi;
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::max(c[a] - r, 0L);
        hi[a] = std::min(c[a] + r, dims_[a] - 1);
      }
      for (long z = lo[2]; z <= hi[2]; ++z) {
        for (long y = lo[1]; y <= hi[1]; ++y) {
          for (long x = lo[0]; x <= hi[0]; ++x) {
            if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != r) continue;
            const std::size_t f = flat({x, y, z});
            for (std::size_t k = start_[f]; k < start_[f + 1]; ++k) visit(order_[k]);
          }
        }
      }
      // Lower bound on the distance to any cell outside rings 0..r.
      double bound = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (lo[a] > 0) bound = std::min(bound, std::max(0.0, q[a] - (lo_[a] + static_cast<double>(lo[a]) * cell_)));
        if (hi[a] < dims_[a] - 1) {
          bound = std::min(bound, std::max(0.0, (lo_[a] + static_cast<double>(hi[a] + 1) * cell_) - q[a]));
        }
      }
      if (std::isinf(bound)) return;  // whole grid visited
      if (radius() <= bound) return;
    }
  }

  std::span<const Vec3> points_;
  Vec3 lo_{}, hi_{};
  double cell_ = 1.0;
  std::array<long, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> order_;
};

/// Brute-force nearest distance; the oracle for PointGrid::nearest.
inline double nearest_distance_brute(const Vec3& q, std::span<const Vec3> points) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& p : points) best = std::min(best, distance(q, p));
  return best;
}

}  // namespace pinc
