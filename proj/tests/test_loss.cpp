#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pinc/loss.hpp"
#include "test_util.hpp"

using namespace pinc;

namespace {

FieldSample with_u(double u) {
  FieldSample s;
  s.u = u;
  return s;
}

FieldSample residual(const Vec3& grad_u, const Vec3& g) {
  FieldSample s;
  s.grad_u = grad_u;
  s.G = g;
  s.G_tilde = g;
  return s;
}

struct Rig {
  MLPConfig cfg{2, 16, 1, 3, 7, 100.0};
  std::vector<Vec3> surface;
  std::vector<Vec3> colloc;
  explicit Rig(int out_dim = 7) {
    cfg.out_dim = out_dim;
    Rng rng(21);
    surface = pinc::testing::random_points(8, rng, 0.8);
    colloc = pinc::testing::random_points(8, rng, 1.1);
  }
};

void check_gradient(const LossSettings& settings, const Rig& rig, std::uint64_t seed) {
  Mlp net(rig.cfg);
  const auto p = init_kaiming(rig.cfg, seed);
  std::vector<double> grad(p.size());
  const LossBreakdown b = loss_and_gradient(net, p, rig.surface, rig.colloc, settings, grad);

  Tape t;
  const auto vars = t.parameters(p);
  LossBreakdown tb;
  const Var loss = record_loss(vars, net, rig.surface, rig.colloc, settings, &tb);
  EXPECT_NEAR(loss.value(), b.total, 1e-12 * std::max(1.0, std::abs(b.total)));
  const auto tape_grad = backward(loss);
  EXPECT_LT(pinc::testing::rel_error(grad, tape_grad), 1e-10);

  auto value = [&](const std::vector<double>& q) {
    return loss_and_gradient(net, q, rig.surface, rig.colloc, settings, std::span<double>()).total;
  };
  const auto fd = pinc::testing::fd_gradient(value, p, 1e-5);
  EXPECT_LT(pinc::testing::rel_error(grad, fd), 1e-4);
}

}  // namespace

TEST(LossWeights, PublishedDefaults) {
  const LossWeights w;
  EXPECT_EQ(w.lambda1, 0.1);
  EXPECT_EQ(w.lambda2, 1e-4);
  EXPECT_EQ(w.lambda3, 5e-4);
  EXPECT_EQ(w.lambda4, 0.1);
  EXPECT_EQ(w.epsilon, 1.0);
  LossWeights bad;
  bad.epsilon = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.lambda3 = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(BoundaryTerm, Examples) {
  const std::vector<FieldSample> zero = {with_u(0), with_u(0)};
  EXPECT_EQ(boundary_term(zero), 0.0);
  const std::vector<FieldSample> pm = {with_u(1), with_u(-1)};
  EXPECT_EQ(boundary_term(pm), 1.0);
  const std::vector<FieldSample> three = {with_u(0.5), with_u(0.1), with_u(0.0)};
  EXPECT_NEAR(boundary_term(three), 0.2, 1e-16);
  EXPECT_THROW(boundary_term({}), UsageError);
}

TEST(GradMatchTerm, Examples) {
  const std::vector<FieldSample> equal = {residual({1, 2, 3}, {1, 2, 3})};
  EXPECT_EQ(grad_match_term(equal), 0.0);
  const std::vector<FieldSample> unit = {residual({1, 0, 0}, {0, 0, 0}), residual({2, 0, 0}, {1, 0, 0})};
  EXPECT_EQ(grad_match_term(unit), 1.0);
  const std::vector<FieldSample> two = {residual({1, 0, 0}, {0, 0, 0}), residual({0, 2, 0}, {0, 0, 0})};
  EXPECT_EQ(grad_match_term(two), 2.5);
  EXPECT_THROW(grad_match_term({}), UsageError);
}

TEST(AuxMatchTerm, Examples) {
  FieldSample a;
  a.G = {1, 0, 0};
  a.G_tilde = {1, 0, 0};
  EXPECT_EQ(aux_match_term(std::vector<FieldSample>{a}), 0.0);
  a.G_tilde = {0, 0, 0};
  EXPECT_EQ(aux_match_term(std::vector<FieldSample>{a}), 1.0);
  FieldSample b;
  b.G = {0, 2, 0};
  EXPECT_EQ(aux_match_term(std::vector<FieldSample>{a, b}), 2.5);
}

TEST(CurlTerm, Examples) {
  FieldSample rot;
  rot.curl_G_tilde = {0, 0, 2};  // V = (-y, x, 0)
  const std::vector<FieldSample> s = {rot, rot, rot};
  LossMode m;
  EXPECT_EQ(curl_term(s, m), 4.0);
  m.curl_target = CurlTarget::off;
  EXPECT_EQ(curl_term(s, m), 0.0);
  m.curl_target = CurlTarget::on_G;
  EXPECT_THROW(curl_term(s, m), UsageError);
}

TEST(CurlTerm, CurlFreeAnalyticFieldGivesZero) {
  // G~ = grad(x y z) as a jet field.
  using J = Jet3<double>;
  Rng rng(2);
  std::vector<FieldSample> s;
  for (int i = 0; i < 10; ++i) {
    const J x = J::variable(rng.uniform(-1, 1), 0), y = J::variable(rng.uniform(-1, 1), 1),
            z = J::variable(rng.uniform(-1, 1), 2);
    FieldSample f;
    f.curl_G_tilde = curl(std::array<J, 3>{y * z, x * z, x * y});
    s.push_back(f);
  }
  EXPECT_LE(curl_term(s, LossMode{}), 1e-10);
}

TEST(AreaTerm, Examples) {
  EXPECT_EQ(smeared_delta(0.0, 1.0), 1.0);
  EXPECT_LT(smeared_delta(10.0, 1.0), 1e-8);
  FieldSample f;
  f.u = 0.0;
  f.grad_u = {0, 1, 0};
  EXPECT_EQ(area_term(std::vector<FieldSample>{f, f}, 1.0), 1.0);
}

TEST(TotalLoss, CompositionAndWeights) {
  FieldSample s = with_u(0.5);
  FieldSample c;
  c.u = 0.0;
  c.grad_u = {1, 0, 0};
  c.G = {0, 0, 0};
  c.G_tilde = {0, 1, 0};
  c.curl_G_tilde = {0, 0, 2};
  const std::vector<FieldSample> surf = {s};
  const std::vector<FieldSample> col = {c};
  const LossWeights w;
  const LossBreakdown b = total_loss(surf, col, w, LossMode{});
  EXPECT_EQ(b.boundary, 0.5);
  EXPECT_EQ(b.grad_match, 1.0);
  EXPECT_EQ(b.aux_match, 1.0);
  EXPECT_EQ(b.curl, 4.0);
  EXPECT_EQ(b.area, 1.0);
  EXPECT_DOUBLE_EQ(b.total, 0.5 + 0.1 + 1e-4 + 4 * 5e-4 + 0.1);

  LossWeights zero;
  zero.lambda1 = zero.lambda2 = zero.lambda3 = zero.lambda4 = 0.0;
  EXPECT_EQ(total_loss(surf, col, zero, LossMode{}).total, 0.5);

  // Linear in each weight with terms held fixed.
  LossWeights w2 = w;
  w2.lambda3 = 2 * w.lambda3;
  EXPECT_NEAR(total_loss(surf, col, w2, LossMode{}).total - b.total, 4.0 * w.lambda3, 1e-15);

  LossMode no_area;
  no_area.area_term = false;
  EXPECT_EQ(total_loss(surf, col, w, no_area).area, 0.0);
}

TEST(TotalLoss, AllResidualsZero) {
  FieldSample c;
  c.u = 5.0;  // delta_1(5) * |grad u| with grad u = 0 contributes 0
  const std::vector<FieldSample> surf = {with_u(0.0)};
  const std::vector<FieldSample> col = {c};
  EXPECT_EQ(total_loss(surf, col, LossWeights{}, LossMode{}).total, 0.0);
}

TEST(TotalLoss, EikonalSplitIgnoresPincTerms) {
  FieldSample c;
  c.grad_u = {1, 0, 0};
  c.G = {0, 1, 0};
  c.curl_G_tilde = {5, 5, 5};
  LossMode m;
  m.formulation = Formulation::eikonal_split;
  LossWeights w;
  w.eta_baseline = 0.3;
  const LossBreakdown b = total_loss(std::vector<FieldSample>{with_u(0.25)}, std::vector<FieldSample>{c}, w, m);
  EXPECT_EQ(b.curl, 0.0);
  EXPECT_EQ(b.area, 0.0);
  EXPECT_DOUBLE_EQ(b.total, 0.25 + 0.3 * 2.0);
}

TEST(TotalLoss, PermutationInvariant) {
  Rig rig;
  Mlp net(rig.cfg);
  const auto p = init_kaiming(rig.cfg, 3);
  const LossSettings s;
  const auto a = loss_and_gradient(net, p, rig.surface, rig.colloc, s, std::span<double>());
  std::reverse(rig.surface.begin(), rig.surface.end());
  std::reverse(rig.colloc.begin(), rig.colloc.end());
  const auto b = loss_and_gradient(net, p, rig.surface, rig.colloc, s, std::span<double>());
  EXPECT_NEAR(a.total, b.total, 1e-14);
}

TEST(TotalLoss, NonFiniteTermIsNamed) {
  LossBreakdown b;
  b.curl = NAN;
  try {
    check_finite(b);
    FAIL() << "expected a numeric fault";
  } catch (const NumericFault& e) {
    EXPECT_NE(std::string(e.what()).find("curl"), std::string::npos);
  }
}

TEST(LossGradient, MatchesFiniteDifferencesCurlOnGTilde) { check_gradient(LossSettings{}, Rig{}, 1); }

TEST(LossGradient, MatchesFiniteDifferencesCurlOnG) {
  LossSettings s;
  s.mode.curl_target = CurlTarget::on_G;
  check_gradient(s, Rig{}, 2);
}

TEST(LossGradient, MatchesFiniteDifferencesFiniteP) {
  LossSettings s;
  s.p = PExponent::finite(3);
  check_gradient(s, Rig{}, 3);
}

TEST(LossGradient, MatchesFiniteDifferencesCurlOffNoArea) {
  LossSettings s;
  s.mode.curl_target = CurlTarget::off;
  s.mode.area_term = false;
  check_gradient(s, Rig{}, 4);
}

TEST(LossGradient, MatchesFiniteDifferencesEikonalSplit) {
  LossSettings s;
  s.mode.formulation = Formulation::eikonal_split;
  check_gradient(s, Rig{4}, 5);
}

TEST(LossGradient, ProjectionActiveBranch) {
  // Large auxiliary weights push |Psi~| beyond the unit ball.
  Rig rig;
  Mlp net(rig.cfg);
  auto p = init_kaiming(rig.cfg, 6);
  const LayerShape& last = net.layers().back();
  for (int o = 4; o < 7; ++o) p[last.bias_offset + static_cast<std::size_t>(o)] = 3.0;
  std::vector<double> grad(p.size());
  const LossSettings s;
  loss_and_gradient(net, p, rig.surface, rig.colloc, s, grad);
  auto value = [&](const std::vector<double>& q) {
    return loss_and_gradient(net, q, rig.surface, rig.colloc, s, std::span<double>()).total;
  };
  EXPECT_LT(pinc::testing::rel_error(grad, pinc::testing::fd_gradient(value, p, 1e-5)), 1e-4);
}

TEST(LossGradient, IndependentOfThreadCount) {
  Rig rig;
  Mlp net(rig.cfg);
  const auto p = init_kaiming(rig.cfg, 7);
  std::vector<double> g1(p.size()), g3(p.size());
  const auto b1 = loss_and_gradient(net, p, rig.surface, rig.colloc, LossSettings{}, g1, 1);
  const auto b3 = loss_and_gradient(net, p, rig.surface, rig.colloc, LossSettings{}, g3, 3);
  EXPECT_EQ(b1.total, b3.total);
  EXPECT_EQ(g1, g3);
}

TEST(LossGradient, RejectsMismatchedHeadsAndEmptyBatches) {
  Rig rig;
  Mlp net(rig.cfg);
  const auto p = init_kaiming(rig.cfg, 1);
  LossSettings s;
  s.mode.formulation = Formulation::eikonal_split;
  EXPECT_THROW(loss_and_gradient(net, p, rig.surface, rig.colloc, s, std::span<double>()), ConfigError);
  EXPECT_THROW(loss_and_gradient(net, p, {}, rig.colloc, LossSettings{}, std::span<double>()), UsageError);
}
