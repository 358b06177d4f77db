#pragma once

// Physically constrained fields built from the network heads.
//
//   G  = (curl Psi - F) / |curl Psi - F|^((p-2)/(p-1))   hard p-Poisson constraint
//   G~ = Psi~ / max(1, |Psi~|)                             projection to the unit ball
//
// with F(x) = x / 3 (divergence one). Everything here is templated on the
// scalar type so the same code runs on doubles, on tape variables and on jets.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "pinc/common.hpp"
#include "pinc/diffcore.hpp"
#include "pinc/network.hpp"

namespace pinc {

inline constexpr double kDefaultEpsDiv = 1e-8;

/// Exponent p of the p-Poisson equation, finite (p >= 2) or infinite.
class PExponent {
 public:
  PExponent() = default;  // infinity

  static PExponent infinity() { return PExponent(); }
  static PExponent finite(double p) {
    if (!(p >= 2.0) || !std::isfinite(p)) throw ConfigError("p must be a finite value >= 2 or infinity");
    PExponent e;
    e.p_ = p;
    return e;
  }
  /// Parses "inf"/"infinity" or a number >= 2.
  static PExponent parse(const std::string& s) {
    if (s == "inf" || s == "infinity" || s == "Inf") return infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse p value '" + s + "'");
    }
    if (used != s.size()) throw ConfigError("cannot parse p value '" + s + "'");
    if (std::isinf(v)) return infinity();
    return finite(v);
  }

  bool is_infinite() const { return std::isinf(p_); }
  double value() const { return p_; }
  /// (p - 2) / (p - 1), in [0, 1); exactly 1 for p = infinity.
  double exponent() const { return is_infinite() ? 1.0 : (p_ - 2.0) / (p_ - 1.0); }

  std::string to_string() const {
    if (is_infinite()) return "inf";
    std::string s = std::to_string(p_);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }

  friend bool operator==(const PExponent&, const PExponent&) = default;

 private:
  double p_ = std::numeric_limits<double>::infinity();
};

template <class S>
using Vec3T = std::array<S, 3>;

/// F(x) = x / 3.
template <class S>
Vec3T<S> source_field(const Vec3T<S>& x) {
  return {x[0] * (1.0 / 3.0), x[1] * (1.0 / 3.0), x[2] * (1.0 / 3.0)};
}
inline Vec3 source_field(const Vec3& x) { return source_field<double>(x); }

template <class S>
S squared_norm(const Vec3T<S>& v) {
  return v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
}

/// max(|v|, floor). Below the floor the result is the constant `floor`, so
/// no derivative of sqrt at zero is ever taken.
template <class S>
S guarded_norm(const Vec3T<S>& v, double floor) {
  using std::sqrt;
  const S sq = squared_norm(v);
  if (std::sqrt(value_of(sq)) <= floor) return S(floor);
  return sqrt(sq);
}

/// Euclidean norm with the zero vector mapped to a constant zero.
template <class S>
S safe_norm(const Vec3T<S>& v) {
  using std::sqrt;
  const S sq = squared_norm(v);
  if (value_of(sq) == 0.0) return S(0.0);
  return sqrt(sq);
}

template <class S>
Vec3T<S> scale(const Vec3T<S>& v, const S& s) {
  return {v[0] * s, v[1] * s, v[2] * s};
}

template <class S>
Vec3T<S> sub(const Vec3T<S>& a, const Vec3T<S>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

/// G from the potential's curl and the source field, with |v| floored at eps_div.
template <class S>
Vec3T<S> construct_G(const Vec3T<S>& curl_psi, const Vec3T<S>& f, PExponent p, double eps_div) {
  using std::pow;
  if (!(eps_div > 0.0)) throw ConfigError("eps_div must be positive");
  const Vec3T<S> v = sub(curl_psi, f);
  const double e = p.exponent();
  if (e == 0.0) return v;
  const S m = guarded_norm(v, eps_div);
  if (p.is_infinite()) return scale(v, S(1.0) / m);
  return scale(v, S(1.0) / pow(m, e));
}
inline Vec3 construct_G(const Vec3& curl_psi, const Vec3& f, PExponent p, double eps_div = kDefaultEpsDiv) {
  return construct_G<double>(curl_psi, f, p, eps_div);
}

/// Projection onto the closed unit ball. Inside (|y| <= 1) this is the
/// identity, including its derivative; outside, y / |y|.
template <class S>
Vec3T<S> construct_G_tilde(const Vec3T<S>& psi_tilde) {
  using std::sqrt;
  const S sq = squared_norm(psi_tilde);
  if (value_of(sq) <= 1.0) return psi_tilde;
  return scale(psi_tilde, S(1.0) / sqrt(sq));
}
inline Vec3 construct_G_tilde(const Vec3& psi_tilde) { return construct_G_tilde<double>(psi_tilde); }

/// Network heads at one point: values, Jacobian rows and (optionally) the
/// six distinct second derivatives per output.
template <class S>
struct HeadInput {
  int out_dim = 7;
  std::array<S, 7> out{};
  std::array<Vec3T<S>, 7> jac{};
  std::array<std::array<S, 6>, 7> hess{};
  bool has_hessian = false;
};

template <class S>
struct FieldValues {
  S u{};
  Vec3T<S> grad_u{};
  Vec3T<S> G{};
  Vec3T<S> G_tilde{};
  Vec3T<S> curl_G_tilde{};
  Vec3T<S> curl_G{};  // only meaningful when computed from second derivatives
};

/// Assembles u, grad u, G, G~ and the curls at x from the network heads.
///
/// out_dim 7: G from the hard constraint on Psi, G~ = P(Psi~) with its curl
/// taken through the projection. out_dim 4 (eikonal split): G = H / |H| with
/// H the raw auxiliary head; G~ = G and curls are zero.
template <class S>
FieldValues<S> compute_fields(const Vec3& x, const HeadInput<S>& in, PExponent p, double eps_div) {
  using J = Jet3<S>;
  FieldValues<S> f;
  f.u = in.out[0];
  f.grad_u = in.jac[0];
  const Vec3T<S> xs = {S(x[0]), S(x[1]), S(x[2])};
  const Vec3T<S> src = source_field(xs);
  if (in.out_dim == 4) {
    const Vec3T<S> h = {in.out[1], in.out[2], in.out[3]};
    f.G = scale(h, S(1.0) / guarded_norm(h, eps_div));
    f.G_tilde = f.G;
    f.curl_G_tilde = {S(0.0), S(0.0), S(0.0)};
    f.curl_G = f.curl_G_tilde;
    return f;
  }
  const std::array<Vec3T<S>, 3> jac_psi = {in.jac[1], in.jac[2], in.jac[3]};
  f.G = construct_G(curl(jac_psi), src, p, eps_div);

  const std::array<J, 3> psi_t = {J{in.out[4], in.jac[4]}, J{in.out[5], in.jac[5]}, J{in.out[6], in.jac[6]}};
  const std::array<J, 3> g_t = construct_G_tilde(psi_t);
  f.G_tilde = {g_t[0].v, g_t[1].v, g_t[2].v};
  f.curl_G_tilde = curl(g_t);

  if (in.has_hessian) {
    // d/dx_m of the Jacobian entry dPsi_c/dx_j is the (j, m) second derivative.
    std::array<std::array<J, 3>, 3> jj;
    for (int c = 0; c < 3; ++c) {
      for (int j = 0; j < 3; ++j) {
        const auto& h = in.hess[static_cast<std::size_t>(1 + c)];
        jj[c][j] = J{in.jac[static_cast<std::size_t>(1 + c)][static_cast<std::size_t>(j)],
                     {h[static_cast<std::size_t>(hessian_pair(j, 0))], h[static_cast<std::size_t>(hessian_pair(j, 1))],
                      h[static_cast<std::size_t>(hessian_pair(j, 2))]}};
      }
    }
    const std::array<J, 3> src_j = {J::variable(S(x[0]), 0) * S(1.0 / 3.0), J::variable(S(x[1]), 1) * S(1.0 / 3.0),
                                    J::variable(S(x[2]), 2) * S(1.0 / 3.0)};
    const std::array<J, 3> g_j = construct_G(curl(jj), src_j, p, eps_div);
    f.curl_G = curl(g_j);
  }
  return f;
}

/// Derived physical quantities at one point.
struct FieldSample {
  Vec3 x{};
  double u = 0.0;
  Vec3 grad_u{};
  Vec3 G{};
  Vec3 G_tilde{};
  Vec3 curl_G_tilde{};
  Vec3 curl_G{};
  bool has_curl_G = false;
};

inline FieldSample to_sample(const Vec3& x, const FieldValues<double>& f, bool has_curl_G) {
  return FieldSample{x, f.u, f.grad_u, f.G, f.G_tilde, f.curl_G_tilde, f.curl_G, has_curl_G};
}

/// Fills a HeadInput from a single-point jet evaluation.
template <class S>
HeadInput<S> head_from(const JetEval<S>& e) {
  HeadInput<S> in;
  in.out_dim = static_cast<int>(e.outputs.size());
  for (std::size_t k = 0; k < e.outputs.size(); ++k) {
    in.out[k] = e.outputs[k];
    in.jac[k] = e.jacobian[k];
  }
  return in;
}

template <class S>
HeadInput<S> head_from(const JetEval2<S>& e) {
  HeadInput<S> in;
  in.out_dim = static_cast<int>(e.outputs.size());
  in.has_hessian = true;
  for (std::size_t k = 0; k < e.outputs.size(); ++k) {
    in.out[k] = e.outputs[k];
    in.jac[k] = e.jacobian[k];
    in.hess[k] = e.hessian[k];
  }
  return in;
}

/// One forward pass with input derivatives, then field assembly.
/// With `second_order`, curl G is also available (needs second derivatives).
inline FieldSample sample_fields(const Mlp& net, std::span<const double> params, const Vec3& x, PExponent p,
                                 double eps_div = kDefaultEpsDiv, bool second_order = false) {
  if (second_order) {
    const auto e = eval_with_input_hessian(params, x, net);
    return to_sample(x, compute_fields(x, head_from(e), p, eps_div), true);
  }
  const auto e = eval_with_input_jacobian(params, x, net);
  return to_sample(x, compute_fields(x, head_from(e), p, eps_div), false);
}

}  // namespace pinc
