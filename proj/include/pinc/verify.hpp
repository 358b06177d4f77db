#pragma once

// Analytic shapes and independent numerical oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pinc/common.hpp"
#include "pinc/diffcore.hpp"
#include "pinc/network.hpp"
#include "pinc/rng.hpp"
#include "pinc/sampler.hpp"

namespace pinc {

/// Sphere or axis-aligned cube centred at the origin; SDF positive inside.
struct AnalyticShape {
  enum class Kind { sphere, cube };
  Kind kind = Kind::sphere;
  double size = 0.5;  // sphere radius or cube half edge

  static AnalyticShape sphere(double radius) { return {Kind::sphere, radius}; }
  static AnalyticShape cube(double edge) { return {Kind::cube, 0.5 * edge}; }
};

struct SdfValue {
  double u = 0.0;
  Vec3 grad{};
};

inline SdfValue analytic_sdf(const AnalyticShape& shape, const Vec3& x) {
  if (shape.kind == AnalyticShape::Kind::sphere) {
    const double r = norm(x);
    const Vec3 g = r > 0.0 ? (-1.0 / r) * x : Vec3{0.0, 0.0, 0.0};
    return {shape.size - r, g};
  }
  // Box: q = |x| - b. Outside part |max(q, 0)|, inside part max_a q_a.
  Vec3 q;
  Vec3 outside;
  for (int a = 0; a < 3; ++a) {
    q[a] = std::abs(x[a]) - shape.size;
    outside[a] = std::max(q[a], 0.0);
  }
  const double out_len = norm(outside);
  const int amax = static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
  const double inside = std::min(q[amax], 0.0);
  SdfValue s;
  s.u = -(out_len + inside);
  if (out_len > 0.0) {
    for (int a = 0; a < 3; ++a) s.grad[a] = -std::copysign(outside[a] / out_len, x[a]);
  } else {
    s.grad[amax] = -std::copysign(1.0, x[amax]);
  }
  return s;
}

/// Exact surface samples with outward unit normals, uniform by area.
inline PointCloud synth_cloud(const AnalyticShape& shape, std::size_t n, Rng& rng) {
  PointCloud c;
  c.points.reserve(n);
  c.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (shape.kind == AnalyticShape::Kind::sphere) {
      Vec3 d;
      double len = 0.0;
      do {
        d = {rng.normal(), rng.normal(), rng.normal()};
        len = norm(d);
      } while (len < 1e-12);
      const Vec3 nrm = (1.0 / len) * d;
      c.points.push_back(shape.size * nrm);
      c.normals.push_back(nrm);
    } else {
      // Six faces of equal area: pick one uniformly.
      const auto face = static_cast<int>(rng.below(6));
      const int axis = face / 2;
      const double side = face % 2 == 0 ? 1.0 : -1.0;
      Vec3 p;
      Vec3 nrm{0.0, 0.0, 0.0};
      for (int a = 0; a < 3; ++a) p[a] = rng.uniform(-shape.size, shape.size);
      p[axis] = side * shape.size;
      nrm[axis] = side;
      c.points.push_back(p);
      c.normals.push_back(nrm);
    }
  }
  return c;
}

struct TheoremEnergies {
  double splitting_energy = 0.0;
  double curl_energy = 0.0;
};

/// Potential choice for the theorem harness.
enum class HarnessPotential { zero, smooth };

/// Midpoint quadrature over [0,1]^3 of |grad u_n - G_n|^2 and |curl G_n|^2 for
/// G_n = grad u_n + (0, sin(2 pi n x) / n, 0).
///
/// G_n is evaluated as a jet so its curl comes from exact derivatives, not
/// from a closed form. The integrands depend on x only, so by default the
/// cube integral reduces to a 1D rule with `quad_resolution` nodes;
/// `full_3d` runs the same rule on the full tensor grid.
inline TheoremEnergies theorem_a1_harness(int n, int quad_resolution, HarnessPotential potential = HarnessPotential::zero,
                                          bool full_3d = false) {
  if (n < 1) throw ConfigError("theorem harness needs n >= 1");
  if (quad_resolution < 1) throw ConfigError("quadrature resolution must be positive");
  using J = Jet3<double>;
  const double two_pi_n = 2.0 * std::numbers::pi * static_cast<double>(n);
  auto gradient_u = [&](const std::array<J, 3>& x) -> std::array<J, 3> {
    if (potential == HarnessPotential::zero) return {J::constant(0.0), J::constant(0.0), J::constant(0.0)};
    // u = sin(x) cos(y) + z^2 / 2, differentiated by hand.
    return {cos(x[0]) * cos(x[1]), -1.0 * (sin(x[0]) * sin(x[1])), x[2]};
  };
  auto integrand = [&](const Vec3& p) {
    const std::array<J, 3> x = {J::variable(p[0], 0), J::variable(p[1], 1), J::variable(p[2], 2)};
    const auto gu = gradient_u(x);
    const J bump = sin(x[0] * two_pi_n) * (1.0 / static_cast<double>(n));
    const std::array<J, 3> g = {gu[0], gu[1] + bump, gu[2]};
    double split = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double diff = gu[static_cast<std::size_t>(a)].v - g[static_cast<std::size_t>(a)].v;
      split += diff * diff;
    }
    const auto c = curl(g);
    return std::pair{split, c[0] * c[0] + c[1] * c[1] + c[2] * c[2]};
  };
  const double h = 1.0 / static_cast<double>(quad_resolution);
  TheoremEnergies e;
  if (!full_3d) {
    for (int i = 0; i < quad_resolution; ++i) {
      const auto [s, c] = integrand({(i + 0.5) * h, 0.5, 0.5});
      e.splitting_energy += s * h;
      e.curl_energy += c * h;
    }
    if (potential == HarnessPotential::zero) return e;
  }
  e = {};
  const double w = h * h * h;
  for (int k = 0; k < quad_resolution; ++k) {
    for (int j = 0; j < quad_resolution; ++j) {
      for (int i = 0; i < quad_resolution; ++i) {
        const auto [s, c] = integrand({(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h});
        e.splitting_energy += s * w;
        e.curl_energy += c * w;
      }
    }
  }
  return e;
}

struct FdAuditReport {
  double max_rel_error = 0.0;
  std::size_t worst_point = 0;
  std::size_t points = 0;
};

/// Compares the forward-mode input Jacobian with central differences of step
/// h. Error per point is |J_ad - J_fd|_F / |J_fd|_F (0 when both vanish).
inline FdAuditReport finite_difference_audit(const Mlp& net, std::span<const double> params, std::span<const Vec3> points,
                                             double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  FdAuditReport r;
  r.points = points.size();
  const std::size_t outs = net.output_dim();
  std::vector<double> plus(outs), minus(outs);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const JetOutput ad = net.forward(params, points[i]);
    double diff2 = 0.0;
    double ref2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      Vec3 xp = points[i];
      Vec3 xm = points[i];
      xp[a] += h;
      xm[a] -= h;
      net.evaluate<double>(params, xp, plus);
      net.evaluate<double>(params, xm, minus);
      for (std::size_t k = 0; k < outs; ++k) {
        const double fd = (plus[k] - minus[k]) / (2.0 * h);
        const double d = ad.jacobian[k][a] - fd;
        diff2 += d * d;
        ref2 += fd * fd;
      }
    }
    const double rel = ref2 == 0.0 ? (diff2 == 0.0 ? 0.0 : std::sqrt(diff2)) : std::sqrt(diff2 / ref2);
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_point = i;
    }
  }
  return r;
}

}  // namespace pinc
