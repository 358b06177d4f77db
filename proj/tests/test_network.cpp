#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pinc/network.hpp"
#include "test_util.hpp"

using namespace pinc;

namespace {

double u_at(const Mlp& net, const std::vector<double>& p, const Vec3& x) {
  std::vector<double> out(net.output_dim());
  const std::array<double, 3> xa = {x[0], x[1], x[2]};
  net.evaluate<double>(p, xa, out);
  return out[0];
}

}  // namespace

TEST(MLPConfig, Validation) {
  EXPECT_NO_THROW(MLPConfig::large_scale().validate());
  EXPECT_NO_THROW(MLPConfig::desk_scale().validate());
  EXPECT_THROW((MLPConfig{4, 0, 2, 3, 7, 100.0}.validate()), ConfigError);
  EXPECT_THROW((MLPConfig{1, 16, 1, 3, 7, 100.0}.validate()), ConfigError);
  EXPECT_THROW((MLPConfig{4, 16, 4, 3, 7, 100.0}.validate()), ConfigError);
  EXPECT_THROW((MLPConfig{4, 16, 0, 3, 7, 100.0}.validate()), ConfigError);
  EXPECT_THROW((MLPConfig{4, 16, 2, 3, 5, 100.0}.validate()), ConfigError);
  EXPECT_NO_THROW((MLPConfig{4, 16, 2, 3, 4, 100.0}.validate()));
}

TEST(Mlp, LargeScaleParameterCount) {
  // 3->512, 512->512 (x2), 512->509, then 512->512 (x4), 512->7.
  const std::size_t expected = (3 * 512 + 512) + 2 * (512 * 512 + 512) + (512 * 509 + 509) +
                               4 * (512 * 512 + 512) + (512 * 7 + 7);
  EXPECT_EQ(expected, 1842692u);
  EXPECT_EQ(Mlp(MLPConfig::large_scale()).param_count(), expected);
  EXPECT_EQ(Mlp(MLPConfig::large_scale()).layers().size(), 9u);
}

TEST(Mlp, ZeroWidthIsConfigError) {
  EXPECT_THROW(Mlp(MLPConfig{4, 0, 2, 3, 7, 100.0}), ConfigError);
  EXPECT_THROW(init_kaiming(MLPConfig{4, 0, 2, 3, 7, 100.0}, 1), ConfigError);
}

TEST(Mlp, SkipConnectionHandBuiltOracle) {
  // Layer 0 feeds one zero unit; layer 1 sees [h, x] / sqrt(2) and picks x.
  const MLPConfig cfg{2, 4, 1, 3, 4, 100.0};
  Mlp net(cfg);
  std::vector<double> p(net.param_count(), 0.0);
  const auto& L = net.layers();
  ASSERT_EQ(L[0].out, 1);
  ASSERT_EQ(L[1].in, 4);
  for (int i = 0; i < 3; ++i) {
    p[L[1].weight_offset + static_cast<std::size_t>(i * L[1].in + 1 + i)] = 1.0;
    p[L[2].weight_offset + static_cast<std::size_t>(i * L[2].in + i)] = 1.0;
  }
  const Vec3 x = {0.3, -0.2, 0.05};
  std::vector<double> out(4);
  net.evaluate<double>(p, std::array<double, 3>{x[0], x[1], x[2]}, out);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(out[static_cast<std::size_t>(i)], softplus(x[static_cast<std::size_t>(i)] / std::sqrt(2.0), 100.0), 1e-15);
  }
  EXPECT_EQ(out[3], 0.0);
  // Removing the skip path disconnects the output from x.
  for (int i = 0; i < 3; ++i) p[L[1].weight_offset + static_cast<std::size_t>(i * L[1].in + 1 + i)] = 0.0;
  net.evaluate<double>(p, std::array<double, 3>{x[0], x[1], x[2]}, out);
  EXPECT_NEAR(out[0], softplus(0.0, 100.0), 1e-15);
}

TEST(Mlp, ForwardIsPureAndShaped) {
  const MLPConfig cfg = MLPConfig::desk_scale();
  Mlp net(cfg);
  const auto p = init_geometric(cfg, 3, 0.5);
  const auto a = net.forward(p, {0.1, 0.2, 0.3});
  const auto b = net.forward(p, {0.1, 0.2, 0.3});
  ASSERT_EQ(a.values.size(), 7u);
  ASSERT_EQ(a.jacobian.size(), 7u);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.jacobian, b.jacobian);
}

TEST(Mlp, ForwardJacobianMatchesFiniteDifferences) {
  const MLPConfig cfg = MLPConfig::desk_scale();
  Mlp net(cfg);
  const auto p = init_geometric(cfg, 4, 0.5);
  Rng rng(2);
  const double h = 1e-4;
  for (int t = 0; t < 10; ++t) {
    const Vec3 x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto j = net.forward(p, x);
    std::vector<double> ad, fd;
    for (int a = 0; a < 3; ++a) {
      Vec3 xp = x, xm = x;
      xp[static_cast<std::size_t>(a)] += h;
      xm[static_cast<std::size_t>(a)] -= h;
      const auto op = net.forward(p, xp).values;
      const auto om = net.forward(p, xm).values;
      for (std::size_t k = 0; k < 7; ++k) {
        ad.push_back(j.jacobian[k][static_cast<std::size_t>(a)]);
        fd.push_back((op[k] - om[k]) / (2 * h));
      }
    }
    EXPECT_LT(pinc::testing::rel_error(ad, fd), 1e-5);
  }
}

TEST(Mlp, NonFiniteInputIsRejected) {
  Mlp net(MLPConfig::desk_scale());
  const auto p = init_kaiming(net.config(), 1);
  EXPECT_THROW(net.forward(p, {0.0, INFINITY, 0.0}), NumericFault);
}

TEST(Init, GeometricSphereSignsLargeScale) {
  const MLPConfig cfg = MLPConfig::large_scale();
  Mlp net(cfg);
  const auto p = init_geometric(cfg, 0, 0.5);
  const double u0 = u_at(net, p, {0, 0, 0});
  const double u1 = u_at(net, p, {0.9, 0, 0});
  EXPECT_GT(u0, 0.0);
  EXPECT_LT(u1, 0.0);
}

TEST(Init, GeometricRadialProfile) {
  for (const MLPConfig& cfg : {MLPConfig::desk_scale(), MLPConfig::large_scale()}) {
    Mlp net(cfg);
    const double radius = 0.5;
    const auto p = init_geometric(cfg, 7, radius);
    for (int axis = 0; axis < 3; ++axis) {
      for (double sign : {1.0, -1.0}) {
        double prev = INFINITY;
        double crossing = -1.0;
        for (int k = 0; k <= 100; ++k) {
          const double r = 1.1 * k / 100.0;
          Vec3 x{0, 0, 0};
          x[static_cast<std::size_t>(axis)] = sign * r;
          const double u = u_at(net, p, x);
          // The smooth fit of |x| rounds off the cone tip, so skip the origin.
          if (r >= 0.1) {
            EXPECT_LT(u, prev + 1e-9) << "not monotone at r=" << r;
          }
          if (prev > 0.0 && u <= 0.0 && crossing < 0.0) crossing = r;
          prev = u;
        }
        EXPECT_GT(crossing, radius - 0.25);
        EXPECT_LT(crossing, radius + 0.25);
      }
    }
  }
}

TEST(Init, GeometricDeterminism) {
  const MLPConfig cfg = MLPConfig::desk_scale();
  EXPECT_EQ(init_geometric(cfg, 5, 0.5), init_geometric(cfg, 5, 0.5));
  EXPECT_NE(init_geometric(cfg, 5, 0.5), init_geometric(cfg, 6, 0.5));
  EXPECT_THROW(init_geometric(cfg, 5, 0.0), ConfigError);
}

TEST(Init, GeometricAuxiliaryHeadsSmall) {
  const MLPConfig cfg = MLPConfig::desk_scale();
  Mlp net(cfg);
  const auto p = init_geometric(cfg, 1, 0.5);
  const LayerShape& last = net.layers().back();
  for (int o = 1; o < 7; ++o) {
    EXPECT_EQ(p[last.bias_offset + static_cast<std::size_t>(o)], 0.0);
    for (int i = 0; i < last.in; ++i) EXPECT_LT(std::abs(p[last.weight_offset + static_cast<std::size_t>(o * last.in + i)]), 1e-3);
  }
}

TEST(Init, KaimingBoundsAndDeterminism) {
  const MLPConfig cfg = MLPConfig::desk_scale();
  Mlp net(cfg);
  const auto p = init_kaiming(cfg, 9);
  EXPECT_EQ(p, init_kaiming(cfg, 9));
  EXPECT_NE(p, init_kaiming(cfg, 10));
  for (const LayerShape& s : net.layers()) {
    const double wb = std::sqrt(6.0 / s.in);
    const double bb = 1.0 / std::sqrt(static_cast<double>(s.in));
    for (std::size_t k = 0; k < static_cast<std::size_t>(s.in * s.out); ++k) {
      EXPECT_LE(std::abs(p[s.weight_offset + k]), wb);
    }
    for (std::size_t k = 0; k < static_cast<std::size_t>(s.out); ++k) EXPECT_LE(std::abs(p[s.bias_offset + k]), bb);
  }
}

TEST(BatchTape, MatchesPointwiseJetsToSecondOrder) {
  const MLPConfig cfg{3, 24, 2, 3, 7, 100.0};
  Mlp net(cfg);
  const auto p = init_geometric(cfg, 2, 0.5);
  Rng rng(4);
  const auto pts = pinc::testing::random_points(13, rng);
  const BatchTape tape(net, p, pts, DerivOrder::second);
  for (std::size_t n = 0; n < pts.size(); ++n) {
    const auto ref = eval_with_input_hessian(std::span<const double>(p), pts[n], net);
    const auto k = static_cast<Eigen::Index>(n);
    for (int o = 0; o < 7; ++o) {
      const auto ou = static_cast<std::size_t>(o);
      EXPECT_NEAR(tape.output(o, k), ref.outputs[ou], 1e-12);
      for (int a = 0; a < 3; ++a) EXPECT_NEAR(tape.jacobian(o, k, a), ref.jacobian[ou][static_cast<std::size_t>(a)], 1e-11);
      for (int q = 0; q < 6; ++q) EXPECT_NEAR(tape.hessian(o, k, q), ref.hessian[ou][static_cast<std::size_t>(q)], 1e-8);
    }
  }
}

TEST(BatchTape, BackwardMatchesScalarTape) {
  const MLPConfig cfg{2, 8, 1, 3, 7, 100.0};
  Mlp net(cfg);
  const auto p = init_kaiming(cfg, 12);
  Rng rng(6);
  const auto pts = pinc::testing::random_points(5, rng);
  const BatchTape tape(net, p, pts, DerivOrder::first);
  Eigen::MatrixXd adj(7, 4 * 5);
  for (Eigen::Index i = 0; i < adj.size(); ++i) adj.data()[i] = rng.uniform(-1, 1);
  std::vector<double> g(p.size(), 0.0);
  tape.backward(adj, g);

  Tape t;
  const auto vars = t.parameters(p);
  Var loss = 0.0;
  for (std::size_t n = 0; n < pts.size(); ++n) {
    const auto r = record_with_input_jacobian(std::span<const Var>(vars), pts[n], net);
    const auto k = static_cast<Eigen::Index>(n);
    for (int o = 0; o < 7; ++o) {
      loss += r.outputs[static_cast<std::size_t>(o)] * adj(o, k);
      for (int a = 0; a < 3; ++a) loss += r.jacobian[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)] * adj(o, (1 + a) * 5 + k);
    }
  }
  const auto ref = backward(loss);
  EXPECT_LT(pinc::testing::rel_error(g, ref), 1e-12);
}

TEST(Mlp, BatchedValuesMatchReference) {
  const MLPConfig cfg = MLPConfig::desk_scale();
  Mlp net(cfg);
  const auto p = init_geometric(cfg, 1, 0.5);
  Rng rng(8);
  const auto pts = pinc::testing::random_points(20, rng, 1.1);
  Eigen::Matrix3Xd m(3, 20);
  for (int i = 0; i < 20; ++i) m.col(i) = Eigen::Vector3d(pts[static_cast<std::size_t>(i)][0], pts[static_cast<std::size_t>(i)][1], pts[static_cast<std::size_t>(i)][2]);
  const Eigen::MatrixXd v = net.values(p, m);
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(v(0, i), u_at(net, p, pts[static_cast<std::size_t>(i)]), 1e-12);
}
