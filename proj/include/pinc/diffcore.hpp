#pragma once

// Nested automatic differentiation.
//
// Input derivatives are carried forward in Jet3 values (one tangent channel
// per spatial coordinate). Parameter derivatives come from a reverse sweep over
// a Tape of scalar Var nodes. Jet3<Var> composes the two: the tangents are
// themselves recorded, so any scalar built from network outputs *and* their
// input Jacobian can be differentiated with respect to the parameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "pinc/common.hpp"

namespace pinc {

class Tape;

/// Scalar that is either a constant or a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT(google-explicit-constructor): constants mix freely

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::int32_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::int32_t index, double v) : tape_(tape), index_(index), value_(v) {}

  Tape* tape_ = nullptr;
  std::int32_t index_ = -1;
  double value_ = 0.0;
};

/// Append-only record of primitive operations with their local partials.
///
/// Every node has at most two inputs. Parameters occupy one contiguous block
/// of leaves registered through parameters(); gradient() reports adjoints for
/// exactly that block. clear() drops everything, so no state survives between
/// optimization steps.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(double v) { return push(-1, 0.0, -1, 0.0, v); }

  std::vector<Var> parameters(std::span<const double> values) {
    if (param_begin_ >= 0) throw UsageError("tape already holds a parameter block");
    param_begin_ = static_cast<std::int32_t>(nodes_.size());
    param_count_ = static_cast<std::int32_t>(values.size());
    std::vector<Var> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(leaf(v));
    return out;
  }

  Var unary(const Var& a, double value, double da) {
    if (a.is_constant()) return Var(value);
    check_owner(a);
    return push(a.index_, da, -1, 0.0, value);
  }

  Var binary(const Var& a, const Var& b, double value, double da, double db) {
    if (a.is_constant()) return unary(b, value, db);
    if (b.is_constant()) return unary(a, value, da);
    check_owner(a);
    check_owner(b);
    return push(a.index_, da, b.index_, db, value);
  }

  /// d(output)/d(node) for every node on the tape.
  std::vector<double> adjoints(const Var& output) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (output.is_constant()) return adj;
    check_owner(output);
    adj[static_cast<std::size_t>(output.index_)] = 1.0;
    for (std::int32_t i = output.index_; i >= 0; --i) {
      const double a = adj[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.lhs >= 0) adj[static_cast<std::size_t>(n.lhs)] += a * n.dlhs;
      if (n.rhs >= 0) adj[static_cast<std::size_t>(n.rhs)] += a * n.drhs;
    }
    return adj;
  }

  /// d(output)/d(parameter) for the registered parameter block.
  std::vector<double> gradient(const Var& output) const {
    std::vector<double> grad(static_cast<std::size_t>(param_count_), 0.0);
    if (param_begin_ < 0 || output.is_constant()) return grad;
    const auto adj = adjoints(output);
    for (std::int32_t i = 0; i < param_count_; ++i) {
      grad[static_cast<std::size_t>(i)] = adj[static_cast<std::size_t>(param_begin_ + i)];
    }
    return grad;
  }

  void clear() {
    nodes_.clear();
    param_begin_ = -1;
    param_count_ = 0;
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t parameter_count() const { return static_cast<std::size_t>(param_count_); }

 private:
  struct Node {
    std::int32_t lhs;
    std::int32_t rhs;
    double dlhs;
    double drhs;
  };

  Var push(std::int32_t lhs, double dlhs, std::int32_t rhs, double drhs, double value) {
    nodes_.push_back({lhs, rhs, dlhs, drhs});
    return Var(this, static_cast<std::int32_t>(nodes_.size() - 1), value);
  }

  void check_owner(const Var& v) const {
    if (v.tape_ != this || v.index_ < 0 || static_cast<std::size_t>(v.index_) >= nodes_.size()) {
      throw UsageError("scalar is not recorded on this tape");
    }
  }

  std::vector<Node> nodes_;
  std::int32_t param_begin_ = -1;
  std::int32_t param_count_ = 0;
};

/// Reverse sweep from a recorded scalar to the parameter block of its tape.
inline std::vector<double> backward(const Var& loss) {
  if (loss.tape() == nullptr) throw UsageError("backward() on a scalar that is not on any tape");
  return loss.tape()->gradient(loss);
}

namespace detail {
inline Tape* owner(const Var& a, const Var& b) { return a.tape() ? a.tape() : b.tape(); }
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  Tape* t = detail::owner(a, b);
  const double v = a.value() + b.value();
  return t ? t->binary(a, b, v, 1.0, 1.0) : Var(v);
}
inline Var operator-(const Var& a, const Var& b) {
  Tape* t = detail::owner(a, b);
  const double v = a.value() - b.value();
  return t ? t->binary(a, b, v, 1.0, -1.0) : Var(v);
}
inline Var operator*(const Var& a, const Var& b) {
  Tape* t = detail::owner(a, b);
  const double v = a.value() * b.value();
  return t ? t->binary(a, b, v, b.value(), a.value()) : Var(v);
}
inline Var operator/(const Var& a, const Var& b) {
  Tape* t = detail::owner(a, b);
  const double inv = 1.0 / b.value();
  const double v = a.value() * inv;
  return t ? t->binary(a, b, v, inv, -v * inv) : Var(v);
}
inline Var operator-(const Var& a) {
  return a.tape() ? a.tape()->unary(a, -a.value(), -1.0) : Var(-a.value());
}
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

namespace detail {
inline Var apply(const Var& a, double value, double da) {
  return a.tape() ? a.tape()->unary(a, value, da) : Var(value);
}
}  // namespace detail

// Numerically stable logistic and softplus, shared by every scalar type.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double softplus(double x, double beta) {
  const double bx = beta * x;
  return (std::max(bx, 0.0) + std::log1p(std::exp(-std::abs(bx)))) / beta;
}

inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return detail::apply(a, s, 0.5 / s);
}
inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return detail::apply(a, e, e);
}
inline Var log(const Var& a) { return detail::apply(a, std::log(a.value()), 1.0 / a.value()); }
inline Var log1p(const Var& a) {
  return detail::apply(a, std::log1p(a.value()), 1.0 / (1.0 + a.value()));
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return detail::apply(a, t, 1.0 - t * t);
}
inline Var sin(const Var& a) { return detail::apply(a, std::sin(a.value()), std::cos(a.value())); }
inline Var cos(const Var& a) { return detail::apply(a, std::cos(a.value()), -std::sin(a.value())); }
inline Var abs(const Var& a) {
  const double v = a.value();
  return detail::apply(a, std::abs(v), v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
}
inline Var pow(const Var& a, double k) {
  return detail::apply(a, std::pow(a.value(), k), k * std::pow(a.value(), k - 1.0));
}
inline Var sigmoid(const Var& a) {
  const double s = sigmoid(a.value());
  return detail::apply(a, s, s * (1.0 - s));
}
inline Var softplus(const Var& a, double beta) {
  return detail::apply(a, softplus(a.value(), beta), sigmoid(beta * a.value()));
}

/// Value paired with its three spatial partial derivatives.
template <class T>
struct Jet3 {
  T v{};
  std::array<T, 3> d{};

  static Jet3 constant(const T& value) { return Jet3{value, {T{}, T{}, T{}}}; }
  /// Seeds the coordinate x_axis: tangent is the unit vector e_axis.
  static Jet3 variable(const T& value, int axis) {
    Jet3 j{value, {T{}, T{}, T{}}};
    j.d[static_cast<std::size_t>(axis)] = T(1.0);
    return j;
  }
};

template <class T>
struct is_jet : std::false_type {};
template <class T>
struct is_jet<Jet3<T>> : std::true_type {};
template <class T>
inline constexpr bool is_jet_v = is_jet<T>::value;

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }
template <class T>
double value_of(const Jet3<T>& x) {
  return value_of(x.v);
}

namespace detail {
// Chain rule: result tangent = f'(a.v) * a.d.
template <class T>
Jet3<T> chain(const Jet3<T>& a, T value, const T& slope) {
  return Jet3<T>{std::move(value), {slope * a.d[0], slope * a.d[1], slope * a.d[2]}};
}
}  // namespace detail

template <class T>
Jet3<T> operator+(const Jet3<T>& a, const Jet3<T>& b) {
  return {a.v + b.v, {a.d[0] + b.d[0], a.d[1] + b.d[1], a.d[2] + b.d[2]}};
}
template <class T>
Jet3<T> operator-(const Jet3<T>& a, const Jet3<T>& b) {
  return {a.v - b.v, {a.d[0] - b.d[0], a.d[1] - b.d[1], a.d[2] - b.d[2]}};
}
template <class T>
Jet3<T> operator-(const Jet3<T>& a) {
  return {-a.v, {-a.d[0], -a.d[1], -a.d[2]}};
}
template <class T>
Jet3<T> operator*(const Jet3<T>& a, const Jet3<T>& b) {
  return {a.v * b.v,
          {a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1], a.d[2] * b.v + a.v * b.d[2]}};
}
template <class T>
Jet3<T> operator/(const Jet3<T>& a, const Jet3<T>& b) {
  const T inv = T(1.0) / b.v;
  const T q = a.v * inv;
  return {q,
          {(a.d[0] - q * b.d[0]) * inv, (a.d[1] - q * b.d[1]) * inv, (a.d[2] - q * b.d[2]) * inv}};
}
template <class T>
Jet3<T> operator*(const Jet3<T>& a, const T& s) {
  return {a.v * s, {a.d[0] * s, a.d[1] * s, a.d[2] * s}};
}
template <class T>
Jet3<T> operator*(const T& s, const Jet3<T>& a) {
  return a * s;
}
template <class T>
Jet3<T> operator+(const Jet3<T>& a, const T& s) {
  return {a.v + s, a.d};
}
template <class T>
Jet3<T> operator-(const Jet3<T>& a, const T& s) {
  return {a.v - s, a.d};
}
template <class T>
Jet3<T> operator/(const Jet3<T>& a, const T& s) {
  const T inv = T(1.0) / s;
  return a * inv;
}
// Plain double constants when T is not double itself.
template <class T>
  requires(!std::same_as<T, double>)
Jet3<T> operator*(const Jet3<T>& a, double s) {
  return a * T(s);
}
template <class T>
  requires(!std::same_as<T, double>)
Jet3<T> operator*(double s, const Jet3<T>& a) {
  return a * T(s);
}
template <class T>
  requires(!std::same_as<T, double>)
Jet3<T> operator+(const Jet3<T>& a, double s) {
  return a + T(s);
}
template <class T>
  requires(!std::same_as<T, double>)
Jet3<T> operator-(const Jet3<T>& a, double s) {
  return a - T(s);
}
template <class T>
Jet3<T>& operator+=(Jet3<T>& a, const Jet3<T>& b) {
  return a = a + b;
}

template <class T>
Jet3<T> sqrt(const Jet3<T>& a) {
  using std::sqrt;
  T s = sqrt(a.v);
  const T slope = T(0.5) / s;
  return detail::chain(a, std::move(s), slope);
}
template <class T>
Jet3<T> exp(const Jet3<T>& a) {
  using std::exp;
  T e = exp(a.v);
  return detail::chain(a, e, e);
}
template <class T>
Jet3<T> log(const Jet3<T>& a) {
  using std::log;
  return detail::chain(a, log(a.v), T(1.0) / a.v);
}
template <class T>
Jet3<T> tanh(const Jet3<T>& a) {
  using std::tanh;
  T t = tanh(a.v);
  const T slope = T(1.0) - t * t;
  return detail::chain(a, std::move(t), slope);
}
template <class T>
Jet3<T> sin(const Jet3<T>& a) {
  using std::cos;
  using std::sin;
  return detail::chain(a, sin(a.v), cos(a.v));
}
template <class T>
Jet3<T> cos(const Jet3<T>& a) {
  using std::cos;
  using std::sin;
  return detail::chain(a, cos(a.v), -sin(a.v));
}
template <class T>
Jet3<T> pow(const Jet3<T>& a, double k) {
  using std::pow;
  return detail::chain(a, pow(a.v, k), T(k) * pow(a.v, k - 1.0));
}
template <class T>
Jet3<T> sigmoid(const Jet3<T>& a) {
  T s = sigmoid(a.v);
  const T slope = s * (T(1.0) - s);
  return detail::chain(a, std::move(s), slope);
}
template <class T>
Jet3<T> softplus(const Jet3<T>& a, double beta) {
  return detail::chain(a, softplus(a.v, beta), sigmoid(a.v * T(beta)));
}

/// Curl of a vector field from its Jacobian, jac[i][j] = dV_i/dx_j.
template <class S>
std::array<S, 3> curl(const std::array<std::array<S, 3>, 3>& jac) {
  return {jac[2][1] - jac[1][2], jac[0][2] - jac[2][0], jac[1][0] - jac[0][1]};
}

/// Curl read off the tangents of a jet-valued field.
template <class S>
std::array<S, 3> curl(const std::array<Jet3<S>, 3>& field) {
  return curl(std::array<std::array<S, 3>, 3>{field[0].d, field[1].d, field[2].d});
}

/// Divergence (trace of the Jacobian).
template <class S>
S divergence(const std::array<std::array<S, 3>, 3>& jac) {
  return jac[0][0] + jac[1][1] + jac[2][2];
}

/// Network outputs together with their exact input Jacobian at one point.
template <class S>
struct JetEval {
  std::vector<S> outputs;
  std::vector<std::array<S, 3>> jacobian;  // jacobian[i][j] = d output_i / d x_j
};

/// Any model mapping (params, x in R^3) to a fixed number of outputs.
/// evaluate<S>() must be generic over the scalar type so it can run on jets.
template <class N>
concept InputNet = requires(const N& net) {
  { net.param_count() } -> std::convertible_to<std::size_t>;
  { net.output_dim() } -> std::convertible_to<std::size_t>;
};

namespace detail {
template <class S, class Net>
JetEval<S> eval_jets(std::span<const S> params, const Vec3& x, const Net& net) {
  if (params.size() != net.param_count()) {
    throw ConfigError("parameter vector has " + std::to_string(params.size()) +
                      " entries, architecture expects " + std::to_string(net.param_count()));
  }
  if (!is_finite(x)) throw NumericFault("non-finite evaluation point");
  using J = Jet3<S>;
  std::vector<J> jp;
  jp.reserve(params.size());
  for (const S& p : params) jp.push_back(J::constant(p));
  const std::array<J, 3> xj = {J::variable(S(x[0]), 0), J::variable(S(x[1]), 1),
                               J::variable(S(x[2]), 2)};
  std::vector<J> out(net.output_dim());
  net.template evaluate<J>(std::span<const J>(jp), xj, std::span<J>(out));
  JetEval<S> r;
  r.outputs.reserve(out.size());
  r.jacobian.reserve(out.size());
  for (auto& o : out) {
    r.outputs.push_back(o.v);
    r.jacobian.push_back(o.d);
  }
  return r;
}
}  // namespace detail

/// Outputs with Jacobian and the six distinct second input derivatives,
/// ordered (00, 01, 02, 11, 12, 22).
template <class S>
struct JetEval2 {
  std::vector<S> outputs;
  std::vector<std::array<S, 3>> jacobian;
  std::vector<std::array<S, 6>> hessian;
};

namespace detail {
// Nested forward mode: the outer jet differentiates the inner one.
template <class S, class Net>
JetEval2<S> eval_jets2(std::span<const S> params, const Vec3& x, const Net& net) {
  if (params.size() != net.param_count()) {
    throw ConfigError("parameter vector has " + std::to_string(params.size()) +
                      " entries, architecture expects " + std::to_string(net.param_count()));
  }
  if (!is_finite(x)) throw NumericFault("non-finite evaluation point");
  using I = Jet3<S>;
  using J = Jet3<I>;
  std::vector<J> jp;
  jp.reserve(params.size());
  for (const S& p : params) jp.push_back(J::constant(I::constant(p)));
  std::array<J, 3> xj;
  for (int a = 0; a < 3; ++a) {
    xj[static_cast<std::size_t>(a)] = J::constant(I::variable(S(x[static_cast<std::size_t>(a)]), a));
    xj[static_cast<std::size_t>(a)].d[static_cast<std::size_t>(a)] = I::constant(S(1.0));
  }
  std::vector<J> out(net.output_dim());
  net.template evaluate<J>(std::span<const J>(jp), xj, std::span<J>(out));
  constexpr int kPairs[6][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};
  JetEval2<S> r;
  for (auto& o : out) {
    r.outputs.push_back(o.v.v);
    r.jacobian.push_back(o.v.d);
    std::array<S, 6> h;
    for (int k = 0; k < 6; ++k) {
      h[static_cast<std::size_t>(k)] =
          o.d[static_cast<std::size_t>(kPairs[k][0])].d[static_cast<std::size_t>(kPairs[k][1])];
    }
    r.hessian.push_back(h);
  }
  return r;
}
}  // namespace detail

template <InputNet Net>
JetEval2<double> eval_with_input_hessian(std::span<const double> params, const Vec3& x, const Net& net) {
  return detail::eval_jets2<double>(params, x, net);
}

template <InputNet Net>
JetEval2<Var> record_with_input_hessian(std::span<const Var> params, const Vec3& x, const Net& net) {
  return detail::eval_jets2<Var>(params, x, net);
}

/// Forward-mode evaluation: outputs and d(output_i)/d(x_j), exactly.
template <InputNet Net>
JetEval<double> eval_with_input_jacobian(std::span<const double> params, const Vec3& x,
                                         const Net& net) {
  return detail::eval_jets<double>(params, x, net);
}

/// Same evaluation recorded on the tape owning `params`, so outputs and
/// Jacobian entries can feed a loss that backward() differentiates.
template <InputNet Net>
JetEval<Var> record_with_input_jacobian(std::span<const Var> params, const Vec3& x,
                                        const Net& net) {
  return detail::eval_jets<Var>(params, x, net);
}

}  // namespace pinc
