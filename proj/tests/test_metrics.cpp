#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pinc/metrics.hpp"
#include "test_util.hpp"

using namespace pinc;

TEST(Chamfer, TrivialExamples) {
  const std::vector<Vec3> o = {{0, 0, 0}};
  const std::vector<Vec3> x1 = {{1, 0, 0}};
  const std::vector<Vec3> two = {{0, 0, 0}, {2, 0, 0}};
  EXPECT_EQ(chamfer_one_sided(two, two), 0.0);
  EXPECT_EQ(chamfer_one_sided(o, x1), 1.0);
  EXPECT_EQ(chamfer_one_sided(two, o), 1.0);
  EXPECT_EQ(chamfer(o, x1), 1.0);
  EXPECT_EQ(chamfer(two, two), 0.0);
  EXPECT_EQ(chamfer(two, o), chamfer(o, two));
  EXPECT_THROW(chamfer_one_sided({}, o), UsageError);
  EXPECT_THROW(chamfer(o, {}), UsageError);
}

TEST(Hausdorff, TrivialExamples) {
  const std::vector<Vec3> o = {{0, 0, 0}};
  const std::vector<Vec3> y = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_EQ(hausdorff(y, y), 0.0);
  EXPECT_EQ(hausdorff_one_sided(o, y), 0.0);
  EXPECT_EQ(hausdorff_one_sided(y, o), 1.0);
  EXPECT_EQ(hausdorff(o, y), 1.0);
  EXPECT_EQ(hausdorff(o, y, HausdorffRule::sum_of_sides), 1.0);
  const DistanceReport r = distance_report(o, y);
  EXPECT_EQ(r.hausdorff, 1.0);
  EXPECT_GE(r.hausdorff, r.hausdorff_xy);
  EXPECT_GE(r.hausdorff, r.hausdorff_yx);
  EXPECT_EQ(r.chamfer, 0.25);
}

TEST(Distances, FastPathEqualsBruteForce) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t nx = 1 + rng.below(2000);
    const std::size_t ny = 1 + rng.below(2000);
    const auto x = pinc::testing::random_points(nx, rng, 0.2 + trial * 0.1);
    const auto y = pinc::testing::random_points(ny, rng);
    const DistanceReport fast = distance_report(x, y);
    const DistanceReport slow = distance_report(x, y, true);
    EXPECT_EQ(fast.chamfer_xy, slow.chamfer_xy);
    EXPECT_EQ(fast.chamfer_yx, slow.chamfer_yx);
    EXPECT_EQ(fast.hausdorff_xy, slow.hausdorff_xy);
    EXPECT_EQ(fast.hausdorff_yx, slow.hausdorff_yx);
    EXPECT_EQ(fast.chamfer, chamfer(x, y));
    EXPECT_EQ(fast.hausdorff, hausdorff(x, y));
  }
}

TEST(Hausdorff, TriangleInequality) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto x = pinc::testing::random_points(1 + rng.below(40), rng);
    const auto y = pinc::testing::random_points(1 + rng.below(40), rng, 2.0);
    const auto z = pinc::testing::random_points(1 + rng.below(40), rng, 0.5);
    EXPECT_LE(hausdorff(x, z), hausdorff(x, y) + hausdorff(y, z) + 1e-15);
  }
}

TEST(NormalConsistency, Examples) {
  const std::vector<Vec3> n = {{1, 0, 0}, {0, 0.6, 0.8}};
  const std::vector<Vec3> neg = {{-1, 0, 0}, {0, -0.6, -0.8}};
  const std::vector<Vec3> perp = {{0, 1, 0}, {0, 0.8, -0.6}};
  EXPECT_DOUBLE_EQ(normal_consistency(n, n), 1.0);
  EXPECT_DOUBLE_EQ(normal_consistency(neg, n), 1.0);
  EXPECT_NEAR(normal_consistency(perp, n), 0.0, 1e-16);
  EXPECT_THROW(normal_consistency(std::vector<Vec3>{{1, 0, 0}}, n), UsageError);
}

TEST(NormalConsistency, BoundedForUnitFields) {
  Rng rng(13);
  std::vector<Vec3> g(500), n(500);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = pinc::testing::random_points(1, rng)[0];
    g[i] = (rng.uniform() / norm(g[i])) * g[i];
    n[i] = pinc::testing::random_points(1, rng)[0];
    n[i] = (1.0 / norm(n[i])) * n[i];
  }
  const double nc = normal_consistency(g, n);
  EXPECT_GE(nc, 0.0);
  EXPECT_LE(nc, 1.0);
}

TEST(SampleMeshSurface, SingleTriangleSamplesInside) {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.triangles = {{0, 1, 2}};
  Rng rng(14);
  for (const Vec3& p : sample_mesh_surface(m, 5000, rng)) {
    EXPECT_EQ(p[2], 0.0);
    EXPECT_GE(p[0], 0.0);
    EXPECT_GE(p[1], 0.0);
    EXPECT_LE(p[0] + p[1], 1.0 + 1e-15);
  }
  Rng a(3), b(3);
  EXPECT_EQ(sample_mesh_surface(m, 100, a), sample_mesh_surface(m, 100, b));
  Rng e(1);
  EXPECT_THROW(sample_mesh_surface(TriangleMesh{}, 10, e), UsageError);
}

TEST(SampleMeshSurface, AreaWeightedSelection) {
  // Areas 0.5 and 1.5: selection ratio 1:3.
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {10, 0, 0}, {13, 0, 0}, {10, 1, 0}};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};
  Rng rng(15);
  const std::size_t n = 40000;
  std::size_t first = 0;
  for (const Vec3& p : sample_mesh_surface(m, n, rng)) first += p[0] < 5.0;
  const double expect = 0.25 * static_cast<double>(n);
  const double sigma = std::sqrt(static_cast<double>(n) * 0.25 * 0.75);
  EXPECT_NEAR(static_cast<double>(first), expect, 3 * sigma);
}

TEST(FieldMse, Examples) {
  const MLPConfig cfg{2, 16, 1, 3, 7, 100.0};
  Mlp net(cfg);
  const auto a = init_geometric(cfg, 1, 0.5);
  EXPECT_EQ(field_mse(net, a, net, a, 20), 0.0);
  // Shifting the last bias of the u head adds a constant to u.
  auto b = a;
  const std::size_t u_bias = net.param_count() - static_cast<std::size_t>(cfg.out_dim);
  b[u_bias] += 0.3;
  EXPECT_NEAR(field_mse(net, a, net, b, 20), 0.09, 1e-12);
  EXPECT_THROW(field_mse(net, a, net, b, 1), ConfigError);
}

TEST(FieldMse, ResolutionRefinementAgrees) {
  const MLPConfig cfg{2, 16, 1, 3, 7, 10.0};
  Mlp net(cfg);
  const auto a = init_geometric(cfg, 1, 0.5);
  const auto b = init_geometric(cfg, 2, 0.4);
  const double coarse = field_mse(net, a, net, b, 50);
  const double fine = field_mse(net, a, net, b, 100);
  EXPECT_GT(fine, 0.0);
  EXPECT_NEAR(coarse / fine, 1.0, 0.1);
}
