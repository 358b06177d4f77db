#pragma once

// Monte Carlo estimators of the PINC objective
//
//   total = mean_surface |u|
//         + l1 mean |grad u - G|^2 + l2 mean |G - G~|^2 + l3 mean |curl G~|^2
//         + l4 mean delta_eps(u) |grad u|
//
// and of the eikonal-splitting baseline  mean |u| + eta mean |grad u - H|^2.
// Volume means run over the collocation batch, the surface mean over the data
// batch. Weights are applied once, in the total.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pinc/common.hpp"
#include "pinc/diffcore.hpp"
#include "pinc/fields.hpp"
#include "pinc/network.hpp"

namespace pinc {

struct LossWeights {
  double lambda1 = 0.1;     // grad match
  double lambda2 = 1e-4;    // aux match
  double lambda3 = 5e-4;    // curl
  double lambda4 = 0.1;     // area
  double epsilon = 1.0;     // Dirac smearing width
  double eta_baseline = 0.1;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0 || eta_baseline < 0) {
      throw ConfigError("loss weights must be non-negative");
    }
    if (!(epsilon > 0.0)) throw ConfigError("Dirac smearing epsilon must be positive");
  }
};

enum class CurlTarget { on_G_tilde, on_G, off };
enum class Formulation { pinc, eikonal_split };

struct LossMode {
  CurlTarget curl_target = CurlTarget::on_G_tilde;
  bool area_term = true;
  Formulation formulation = Formulation::pinc;

  bool needs_second_order() const {
    return formulation == Formulation::pinc && curl_target == CurlTarget::on_G;
  }
  int out_dim() const { return formulation == Formulation::pinc ? 7 : 4; }
};

struct LossBreakdown {
  double boundary = 0.0;
  double grad_match = 0.0;
  double aux_match = 0.0;
  double curl = 0.0;
  double area = 0.0;
  double total = 0.0;
};

struct LossSettings {
  LossWeights weights;
  LossMode mode;
  PExponent p;
  double eps_div = kDefaultEpsDiv;
};

/// Smeared Dirac delta 1 - tanh^2(x / eps).
template <class S>
S smeared_delta(const S& x, double epsilon) {
  using std::tanh;
  const S t = tanh(x * (1.0 / epsilon));
  return S(1.0) - t * t;
}

template <class S>
struct PointTerms {
  S grad_match{};
  S aux_match{};
  S curl{};
  S area{};
};

/// Raw (unweighted) integrands of the volume terms at one collocation point.
template <class S>
PointTerms<S> collocation_terms(const FieldValues<S>& f, const LossMode& mode, double epsilon) {
  PointTerms<S> t;
  t.grad_match = squared_norm(sub(f.grad_u, f.G));
  if (mode.formulation == Formulation::eikonal_split) {
    t.aux_match = t.curl = t.area = S(0.0);
    return t;
  }
  t.aux_match = squared_norm(sub(f.G, f.G_tilde));
  switch (mode.curl_target) {
    case CurlTarget::on_G_tilde:
      t.curl = squared_norm(f.curl_G_tilde);
      break;
    case CurlTarget::on_G:
      t.curl = squared_norm(f.curl_G);
      break;
    case CurlTarget::off:
      t.curl = S(0.0);
      break;
  }
  t.area = mode.area_term ? smeared_delta(f.u, epsilon) * safe_norm(f.grad_u) : S(0.0);
  return t;
}

/// Weighted contribution of one collocation point, before dividing by the count.
template <class S>
S weighted(const PointTerms<S>& t, const LossWeights& w, const LossMode& mode) {
  if (mode.formulation == Formulation::eikonal_split) return t.grad_match * w.eta_baseline;
  return t.grad_match * w.lambda1 + t.aux_match * w.lambda2 + t.curl * w.lambda3 + t.area * w.lambda4;
}

namespace detail {
inline void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw UsageError(std::string(what) + " batch is empty");
}
}  // namespace detail

/// Mean |u| over the surface batch.
inline double boundary_term(std::span<const FieldSample> surface) {
  detail::require_nonempty(surface.size(), "surface");
  double s = 0.0;
  for (const auto& f : surface) s += std::abs(f.u);
  return s / static_cast<double>(surface.size());
}

/// Mean |grad u - G|^2.
inline double grad_match_term(std::span<const FieldSample> colloc) {
  detail::require_nonempty(colloc.size(), "collocation");
  double s = 0.0;
  for (const auto& f : colloc) s += squared_norm(f.grad_u - f.G);
  return s / static_cast<double>(colloc.size());
}

/// Mean |G - G~|^2.
inline double aux_match_term(std::span<const FieldSample> colloc) {
  detail::require_nonempty(colloc.size(), "collocation");
  double s = 0.0;
  for (const auto& f : colloc) s += squared_norm(f.G - f.G_tilde);
  return s / static_cast<double>(colloc.size());
}

/// Mean squared curl of the selected target; exactly 0 when the term is off.
inline double curl_term(std::span<const FieldSample> colloc, const LossMode& mode) {
  detail::require_nonempty(colloc.size(), "collocation");
  if (mode.curl_target == CurlTarget::off || mode.formulation == Formulation::eikonal_split) return 0.0;
  double s = 0.0;
  for (const auto& f : colloc) {
    if (mode.curl_target == CurlTarget::on_G && !f.has_curl_G) {
      throw UsageError("curl on G requested but samples lack second derivatives");
    }
    s += squared_norm(mode.curl_target == CurlTarget::on_G ? f.curl_G : f.curl_G_tilde);
  }
  return s / static_cast<double>(colloc.size());
}

/// Mean delta_eps(u) |grad u|.
inline double area_term(std::span<const FieldSample> colloc, double epsilon) {
  detail::require_nonempty(colloc.size(), "collocation");
  double s = 0.0;
  for (const auto& f : colloc) s += smeared_delta(f.u, epsilon) * norm(f.grad_u);
  return s / static_cast<double>(colloc.size());
}

inline void check_finite(const LossBreakdown& b) {
  const std::pair<const char*, double> terms[] = {{"boundary", b.boundary}, {"grad_match", b.grad_match},
                                                  {"aux_match", b.aux_match}, {"curl", b.curl},
                                                  {"area", b.area},         {"total", b.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NumericFault(std::string("non-finite ") + name + " loss term");
  }
}

inline double combine(LossBreakdown& b, const LossWeights& w, const LossMode& mode) {
  if (mode.formulation == Formulation::eikonal_split) {
    b.aux_match = b.curl = b.area = 0.0;
    b.total = b.boundary + w.eta_baseline * b.grad_match;
  } else {
    if (!mode.area_term) b.area = 0.0;
    b.total = b.boundary + w.lambda1 * b.grad_match + w.lambda2 * b.aux_match + w.lambda3 * b.curl +
              w.lambda4 * b.area;
  }
  return b.total;
}

/// Total objective from already assembled field samples.
inline LossBreakdown total_loss(std::span<const FieldSample> surface, std::span<const FieldSample> colloc,
                                const LossWeights& weights, const LossMode& mode) {
  weights.validate();
  LossBreakdown b;
  b.boundary = boundary_term(surface);
  b.grad_match = grad_match_term(colloc);
  if (mode.formulation == Formulation::pinc) {
    b.aux_match = aux_match_term(colloc);
    b.curl = curl_term(colloc, mode);
    b.area = mode.area_term ? area_term(colloc, weights.epsilon) : 0.0;
  }
  combine(b, weights, mode);
  check_finite(b);
  return b;
}

namespace detail {

template <class Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  const std::size_t t = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  if (t == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + t - 1) / t;
  for (std::size_t k = 0; k < t; ++k) {
    const std::size_t lo = k * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Loss value and exact parameter gradient for one pair of batches.
///
/// The network runs once per batch through BatchTape. At each collocation
/// point the field assembly and loss integrand are recorded on a small private
/// tape whose leaves are the head values and input derivatives; its reverse
/// sweep yields the output adjoints that BatchTape::backward pushes into the
/// parameters. Per-point results land in fixed slots and are reduced in index
/// order, so the result does not depend on `threads`.
///
/// `grad` may be empty (value only); otherwise it is overwritten.
inline LossBreakdown loss_and_gradient(const Mlp& net, std::span<const double> params,
                                       std::span<const Vec3> surface, std::span<const Vec3> colloc,
                                       const LossSettings& settings, std::span<double> grad, int threads = 1) {
  detail::require_nonempty(surface.size(), "surface");
  detail::require_nonempty(colloc.size(), "collocation");
  settings.weights.validate();
  const LossMode& mode = settings.mode;
  if (static_cast<int>(net.output_dim()) != mode.out_dim()) {
    throw ConfigError("network output dimension does not match the loss formulation");
  }
  const bool want_grad = !grad.empty();
  if (want_grad) {
    net.check_params(grad.size());
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  const int out_dim = mode.out_dim();
  LossBreakdown b;

  // Surface term.
  {
    const BatchTape tape(net, params, surface, DerivOrder::value);
    const Eigen::Index n = tape.batch();
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) s += std::abs(tape.output(0, k));
    b.boundary = s / static_cast<double>(n);
    if (want_grad) {
      Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(out_dim, n);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double u = tape.output(0, k);
        adj(0, k) = (u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0)) / static_cast<double>(n);
      }
      tape.backward(adj, grad);
    }
  }

  // Volume terms.
  const DerivOrder order = mode.needs_second_order() ? DerivOrder::second : DerivOrder::first;
  const BatchTape tape(net, params, colloc, order);
  const Eigen::Index n = tape.batch();
  const int channels = tape.channels();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<PointTerms<double>> terms(static_cast<std::size_t>(n));
  Eigen::MatrixXd adj = want_grad ? Eigen::MatrixXd::Zero(out_dim, channels * n) : Eigen::MatrixXd();

  detail::parallel_chunks(static_cast<std::size_t>(n), threads, [&](std::size_t lo, std::size_t hi) {
    Tape t;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      t.clear();
      HeadInput<Var> in;
      in.out_dim = out_dim;
      in.has_hessian = order == DerivOrder::second;
      for (int o = 0; o < out_dim; ++o) {
        const auto ou = static_cast<std::size_t>(o);
        in.out[ou] = t.leaf(tape.output(o, k));
        for (int a = 0; a < 3; ++a) in.jac[ou][static_cast<std::size_t>(a)] = t.leaf(tape.jacobian(o, k, a));
        if (in.has_hessian) {
          for (int q = 0; q < 6; ++q) in.hess[ou][static_cast<std::size_t>(q)] = t.leaf(tape.hessian(o, k, q));
        }
      }
      const auto fields = compute_fields(colloc[i], in, settings.p, settings.eps_div);
      const auto pt = collocation_terms(fields, mode, settings.weights.epsilon);
      terms[i] = {pt.grad_match.value(), pt.aux_match.value(), pt.curl.value(), pt.area.value()};
      if (!want_grad) continue;
      const Var local = weighted(pt, settings.weights, mode);
      const auto a = t.adjoints(local);
      auto read = [&](const Var& v) { return v.is_constant() ? 0.0 : a[static_cast<std::size_t>(v.index())] * inv_n; };
      for (int o = 0; o < out_dim; ++o) {
        const auto ou = static_cast<std::size_t>(o);
        adj(o, k) = read(in.out[ou]);
        for (int ax = 0; ax < 3; ++ax) adj(o, (1 + ax) * n + k) = read(in.jac[ou][static_cast<std::size_t>(ax)]);
        if (in.has_hessian) {
          for (int q = 0; q < 6; ++q) adj(o, (4 + q) * n + k) = read(in.hess[ou][static_cast<std::size_t>(q)]);
        }
      }
    }
  });

  for (const auto& pt : terms) {
    b.grad_match += pt.grad_match;
    b.aux_match += pt.aux_match;
    b.curl += pt.curl;
    b.area += pt.area;
  }
  b.grad_match *= inv_n;
  b.aux_match *= inv_n;
  b.curl *= inv_n;
  b.area *= inv_n;
  combine(b, settings.weights, mode);
  check_finite(b);
  if (want_grad) tape.backward(adj, grad);
  return b;
}

/// The same objective built end to end on one scalar tape (network included),
/// through the point-by-point jet route. Slow; serves as the independent
/// reference for loss_and_gradient on small networks.
inline Var record_loss(std::span<const Var> params, const Mlp& net, std::span<const Vec3> surface,
                       std::span<const Vec3> colloc, const LossSettings& settings, LossBreakdown* breakdown = nullptr) {
  detail::require_nonempty(surface.size(), "surface");
  detail::require_nonempty(colloc.size(), "collocation");
  const LossMode& mode = settings.mode;
  Var boundary(0.0);
  for (const Vec3& x : surface) {
    std::array<Var, 3> xs = {Var(x[0]), Var(x[1]), Var(x[2])};
    std::vector<Var> out(net.output_dim());
    net.evaluate<Var>(params, xs, out);
    boundary = boundary + abs(out[0]);
  }
  boundary = boundary * (1.0 / static_cast<double>(surface.size()));
  Var volume(0.0);
  LossBreakdown b;
  b.boundary = boundary.value();
  for (const Vec3& x : colloc) {
    const HeadInput<Var> in = mode.needs_second_order() ? head_from(record_with_input_hessian(params, x, net))
                                                        : head_from(record_with_input_jacobian(params, x, net));
    const auto fields = compute_fields(x, in, settings.p, settings.eps_div);
    const auto pt = collocation_terms(fields, mode, settings.weights.epsilon);
    b.grad_match += pt.grad_match.value();
    b.aux_match += pt.aux_match.value();
    b.curl += pt.curl.value();
    b.area += pt.area.value();
    volume = volume + weighted(pt, settings.weights, mode);
  }
  const double inv_n = 1.0 / static_cast<double>(colloc.size());
  b.grad_match *= inv_n;
  b.aux_match *= inv_n;
  b.curl *= inv_n;
  b.area *= inv_n;
  combine(b, settings.weights, mode);
  if (breakdown) *breakdown = b;
  return boundary + volume * inv_n;
}

}  // namespace pinc
