#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pinc/verify.hpp"
#include "test_util.hpp"

using namespace pinc;

TEST(AnalyticSdf, SphereExamples) {
  const AnalyticShape s = AnalyticShape::sphere(0.5);
  EXPECT_EQ(analytic_sdf(s, {0, 0, 0}).u, 0.5);
  const SdfValue v = analytic_sdf(s, {1, 0, 0});
  EXPECT_EQ(v.u, -0.5);
  EXPECT_EQ(v.grad, (Vec3{-1, 0, 0}));
}

TEST(AnalyticSdf, CubeExamples) {
  const AnalyticShape c = AnalyticShape::cube(1.0);
  EXPECT_EQ(analytic_sdf(c, {0.5, 0, 0}).u, 0.0);
  EXPECT_NEAR(analytic_sdf(c, {0.7, 0.7, 0.7}).u, -0.2 * std::sqrt(3.0), 1e-15);
  EXPECT_EQ(analytic_sdf(c, {0, 0, 0}).u, 0.5);
  EXPECT_NEAR(analytic_sdf(c, {0.1, -0.3, 0.2}).u, 0.2, 1e-15);
  EXPECT_EQ(analytic_sdf(c, {0.1, -0.3, 0.2}).grad, (Vec3{0, 1, 0}));
  EXPECT_NEAR(analytic_sdf(c, {0.9, 0.0, 0.0}).u, -0.4, 1e-15);
}

TEST(AnalyticSdf, UnitGradientAndFiniteDifferences) {
  Rng rng(1);
  const double h = 1e-6;
  for (const AnalyticShape& s : {AnalyticShape::sphere(0.5), AnalyticShape::cube(1.0)}) {
    for (int i = 0; i < 10000; ++i) {
      const Vec3 x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const SdfValue v = analytic_sdf(s, x);
      EXPECT_NEAR(norm(v.grad), 1.0, 1e-12);
      if (i % 100 != 0) continue;
      for (int a = 0; a < 3; ++a) {
        Vec3 xp = x, xm = x;
        xp[a] += h;
        xm[a] -= h;
        const double fd = (analytic_sdf(s, xp).u - analytic_sdf(s, xm).u) / (2 * h);
        EXPECT_NEAR(fd, v.grad[a], 1e-5);
      }
    }
  }
}

TEST(SynthCloud, SphereOnSurfaceWithRadialNormals) {
  Rng rng(2);
  const PointCloud c = synth_cloud(AnalyticShape::sphere(0.5), 2000, rng);
  ASSERT_EQ(c.points.size(), 2000u);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(norm(c.points[i]), 0.5, 1e-12);
    EXPECT_LT(distance(c.normals[i], (1.0 / norm(c.points[i])) * c.points[i]), 1e-12);
  }
}

TEST(SynthCloud, CubeFacesUniformByArea) {
  Rng rng(3);
  const std::size_t n = 60000;
  const PointCloud c = synth_cloud(AnalyticShape::cube(1.0), n, rng);
  std::array<std::size_t, 6> count{};
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(analytic_sdf(AnalyticShape::cube(1.0), c.points[i]).u, 0.0, 1e-15);
    for (int a = 0; a < 3; ++a) {
      if (c.normals[i][a] != 0.0) count[static_cast<std::size_t>(2 * a + (c.normals[i][a] < 0))]++;
    }
  }
  const double expect = static_cast<double>(n) / 6.0;
  const double sigma = std::sqrt(static_cast<double>(n) * (1.0 / 6.0) * (5.0 / 6.0));
  for (std::size_t f : count) EXPECT_NEAR(static_cast<double>(f), expect, 4 * sigma);
}

TEST(TheoremHarness, SplittingEnergyFollowsInverseSquare) {
  for (int n : {1, 2, 4, 8}) {
    const TheoremEnergies e = theorem_a1_harness(n, 512);
    EXPECT_NEAR(e.splitting_energy, 1.0 / (2.0 * n * n), 1e-6) << n;
  }
  EXPECT_NEAR(theorem_a1_harness(4, 512).splitting_energy, 1.0 / 32.0, 1e-9);
  for (int n : {1, 2, 4}) {
    const double ratio = theorem_a1_harness(n, 512).splitting_energy / theorem_a1_harness(2 * n, 512).splitting_energy;
    EXPECT_NEAR(ratio, 4.0, 0.04);
  }
}

TEST(TheoremHarness, CurlEnergyIsIndependentOfN) {
  // |curl G_n|^2 = (2 pi cos(2 pi n x))^2, whose mean over [0,1] is 2 pi^2.
  const double exact = 2.0 * std::numbers::pi * std::numbers::pi;
  double first = 0.0;
  for (int n : {1, 2, 4, 8}) {
    const TheoremEnergies e = theorem_a1_harness(n, 512);
    EXPECT_NEAR(e.curl_energy, exact, 1e-9) << n;
    if (n == 1) first = e.curl_energy;
    EXPECT_NEAR(e.curl_energy / first, 1.0, 1e-12);
  }
}

TEST(TheoremHarness, FullCubeQuadratureMatchesReduction) {
  for (int n : {1, 3}) {
    const TheoremEnergies r = theorem_a1_harness(n, 24);
    const TheoremEnergies f = theorem_a1_harness(n, 24, HarnessPotential::zero, true);
    EXPECT_NEAR(f.splitting_energy, r.splitting_energy, 1e-13);
    EXPECT_NEAR(f.curl_energy, r.curl_energy, 1e-11);
  }
}

TEST(TheoremHarness, SmoothPotentialLeavesEnergiesUnchanged) {
  const TheoremEnergies z = theorem_a1_harness(2, 32);
  const TheoremEnergies s = theorem_a1_harness(2, 32, HarnessPotential::smooth);
  EXPECT_NEAR(s.splitting_energy, z.splitting_energy, 1e-13);
  EXPECT_NEAR(s.curl_energy, z.curl_energy, 1e-11);
  EXPECT_THROW(theorem_a1_harness(0, 10), ConfigError);
  EXPECT_THROW(theorem_a1_harness(1, 0), ConfigError);
}

TEST(FdAudit, SmoothNetPassesAtSmallStep) {
  const MLPConfig cfg = MLPConfig::desk_scale();
  Mlp net(cfg);
  const auto params = init_geometric(cfg, 4, 0.5);
  Rng rng(5);
  const auto pts = pinc::testing::random_points(40, rng);
  const FdAuditReport r = finite_difference_audit(net, params, pts, 1e-4);
  EXPECT_EQ(r.points, 40u);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(FdAudit, ErrorGrowsWithStep) {
  const MLPConfig cfg{2, 16, 1, 3, 7, 10.0};
  Mlp net(cfg);
  const auto params = init_kaiming(cfg, 6);
  Rng rng(6);
  const auto pts = pinc::testing::random_points(20, rng);
  const double small = finite_difference_audit(net, params, pts, 1e-4).max_rel_error;
  const double large = finite_difference_audit(net, params, pts, 0.1).max_rel_error;
  EXPECT_GT(large, 100 * small);
  EXPECT_THROW(finite_difference_audit(net, params, pts, 0.0), ConfigError);
}

TEST(FdAudit, ConstantNetHasZeroError) {
  const MLPConfig cfg{2, 16, 1, 3, 7, 10.0};
  Mlp net(cfg);
  std::vector<double> params(net.param_count(), 0.0);
  params.back() = 2.0;
  Rng rng(7);
  const auto pts = pinc::testing::random_points(5, rng);
  const FdAuditReport r = finite_difference_audit(net, params, pts, 1e-4);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.worst_point, 0u);
}
