#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pinc/common.hpp"

namespace pinc {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * norm(cross(b - a, c - a));
}

inline double surface_area(const TriangleMesh& m) {
  double s = 0.0;
  for (const auto& t : m.triangles) s += triangle_area(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
  return s;
}

}  // namespace pinc
