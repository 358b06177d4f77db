#pragma once

// Skip-connected softplus MLP R^3 -> R^out_dim.
//
// Output layout: out[0] = u, out[1..4] = Psi, out[4..7] = Psi~ (PINC mode), or
// out[1..4] = raw H (eikonal-split mode, out_dim = 4).
//
// Two evaluation routes share one parameter layout:
//   * Mlp::evaluate<S>() runs point-by-point on any scalar type (double,
//     Jet3<double>, Jet3<Var>, nested jets). It is the reference route.
//   * BatchTape runs a whole batch as dense matrix products, carrying value,
//     first and optionally second input derivatives as extra column blocks,
//     and back-propagates adjoints of all of them to the parameters.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pinc/common.hpp"
#include "pinc/diffcore.hpp"
#include "pinc/rng.hpp"

namespace pinc {

struct MLPConfig {
  int depth = 8;        // hidden layers (each followed by softplus)
  int width = 512;
  int skip_layer = 4;   // linear layer whose input is [h, x] / sqrt(2)
  int in_dim = 3;
  int out_dim = 7;
  double softplus_beta = 100.0;

  static MLPConfig large_scale(int out_dim = 7) { return {8, 512, 4, 3, out_dim, 100.0}; }
  static MLPConfig desk_scale(int out_dim = 7) { return {4, 128, 2, 3, out_dim, 100.0}; }

  void validate() const {
    if (width <= 0) throw ConfigError("network width must be positive");
    if (depth < 2) throw ConfigError("network depth must be at least 2");
    if (in_dim != 3) throw ConfigError("network input dimension must be 3");
    if (out_dim != 7 && out_dim != 4) throw ConfigError("network output dimension must be 7 or 4");
    if (skip_layer < 1 || skip_layer >= depth) {
      throw ConfigError("skip layer must satisfy 1 <= skip_layer < depth");
    }
    if (width <= in_dim) throw ConfigError("network width must exceed the input dimension");
    if (!(softplus_beta > 0.0)) throw ConfigError("softplus beta must be positive");
  }

  friend bool operator==(const MLPConfig&, const MLPConfig&) = default;
};

struct LayerShape {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // row-major out x in
  std::size_t bias_offset = 0;
};

/// Single-point evaluation result.
struct JetOutput {
  std::vector<double> values;
  std::vector<Vec3> jacobian;  // jacobian[k][j] = d values[k] / d x_j
};

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

/// Elementwise softplus, vectorized; same stable split as the scalar form.
template <class Derived>
Eigen::MatrixXd softplus_array(const Eigen::MatrixBase<Derived>& z, double beta) {
  return (z.array().max(0.0) + (1.0 + (-beta * z.array().abs()).exp()).log() / beta).matrix();
}

class Mlp {
 public:
  explicit Mlp(const MLPConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int linear = cfg_.depth + 1;
    std::size_t offset = 0;
    for (int l = 0; l < linear; ++l) {
      LayerShape s;
      s.in = l == 0 ? cfg_.in_dim : cfg_.width;
      if (l == linear - 1) {
        s.out = cfg_.out_dim;
      } else if (l + 1 == cfg_.skip_layer) {
        s.out = cfg_.width - cfg_.in_dim;
      } else {
        s.out = cfg_.width;
      }
      s.weight_offset = offset;
      offset += static_cast<std::size_t>(s.in) * static_cast<std::size_t>(s.out);
      s.bias_offset = offset;
      offset += static_cast<std::size_t>(s.out);
      layers_.push_back(s);
    }
    param_count_ = offset;
  }

  const MLPConfig& config() const { return cfg_; }
  std::size_t param_count() const { return param_count_; }
  std::size_t output_dim() const { return static_cast<std::size_t>(cfg_.out_dim); }
  const std::vector<LayerShape>& layers() const { return layers_; }

  /// Reference evaluation on an arbitrary scalar type.
  template <class S>
  void evaluate(std::span<const S> params, const std::array<S, 3>& x, std::span<S> out) const {
    check_params(params.size());
    std::vector<S> h(x.begin(), x.end());
    std::vector<S> z;
    const std::size_t last = layers_.size() - 1;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerShape& s = layers_[l];
      if (static_cast<int>(l) == cfg_.skip_layer) {
        h.insert(h.end(), x.begin(), x.end());
        for (auto& v : h) v = v * kInvSqrt2;
      }
      z.assign(static_cast<std::size_t>(s.out), S{});
      for (int o = 0; o < s.out; ++o) {
        S acc = params[s.bias_offset + static_cast<std::size_t>(o)];
        const std::size_t row = s.weight_offset + static_cast<std::size_t>(o) * static_cast<std::size_t>(s.in);
        for (int i = 0; i < s.in; ++i) acc = acc + params[row + static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(o)] = acc;
      }
      if (l == last) break;
      h.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) h[i] = softplus(z[i], cfg_.softplus_beta);
    }
    if (out.size() != z.size()) throw ConfigError("output span has the wrong size");
    std::copy(z.begin(), z.end(), out.begin());
  }

  JetOutput forward(std::span<const double> params, const Vec3& x) const {
    auto e = eval_with_input_jacobian(params, x, *this);
    return JetOutput{std::move(e.outputs), std::move(e.jacobian)};
  }

  /// Values only (channel 0) for a batch; nothing is recorded.
  Eigen::MatrixXd values(std::span<const double> params, const Eigen::Matrix3Xd& points) const {
    check_params(params.size());
    Eigen::MatrixXd h = points;
    Eigen::MatrixXd z;
    const std::size_t last = layers_.size() - 1;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (static_cast<int>(l) == cfg_.skip_layer) {
        Eigen::MatrixXd cat(h.rows() + 3, h.cols());
        cat.topRows(h.rows()) = h;
        cat.bottomRows(3) = points;
        h = cat * kInvSqrt2;
      }
      z = weights(params, l) * h;
      z.colwise() += bias(params, l);
      if (l == last) break;
      h = softplus_array(z, cfg_.softplus_beta);
    }
    return z;
  }

  using WeightMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using BiasMap = Eigen::Map<const Eigen::VectorXd>;

  WeightMap weights(std::span<const double> params, std::size_t l) const {
    const LayerShape& s = layers_[l];
    return WeightMap(params.data() + s.weight_offset, s.out, s.in);
  }
  BiasMap bias(std::span<const double> params, std::size_t l) const {
    const LayerShape& s = layers_[l];
    return BiasMap(params.data() + s.bias_offset, s.out);
  }

  void check_params(std::size_t n) const {
    if (n != param_count_) {
      throw ConfigError("parameter vector has " + std::to_string(n) + " entries, architecture expects " +
                        std::to_string(param_count_));
    }
  }

 private:
  MLPConfig cfg_;
  std::vector<LayerShape> layers_;
  std::size_t param_count_ = 0;
};

/// Geometric initialization: the fresh u head approximates the signed distance
/// to a sphere of `radius`, positive inside. Auxiliary heads start near zero.
inline std::vector<double> init_geometric(const MLPConfig& cfg, std::uint64_t seed, double radius) {
  if (!(radius > 0.0)) throw ConfigError("geometric init radius must be positive");
  const Mlp net(cfg);
  std::vector<double> p(net.param_count(), 0.0);
  Rng rng = Rng(seed).substream(stream::kInit);
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& s = layers[l];
    const bool last = l + 1 == layers.size();
    for (int o = 0; o < s.out; ++o) {
      double mean = 0.0;
      double stddev = std::sqrt(2.0) / std::sqrt(static_cast<double>(s.out));
      if (last) {
        mean = o == 0 ? -std::sqrt(std::numbers::pi) / std::sqrt(static_cast<double>(s.in)) : 0.0;
        stddev = 1e-4;
      }
      for (int i = 0; i < s.in; ++i) {
        p[s.weight_offset + static_cast<std::size_t>(o * s.in + i)] = mean + stddev * rng.normal();
      }
      p[s.bias_offset + static_cast<std::size_t>(o)] = (last && o == 0) ? radius : 0.0;
    }
  }
  return p;
}

/// Fan-in scaled uniform init: weights in [-sqrt(6/fan_in), sqrt(6/fan_in)],
/// biases in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline std::vector<double> init_kaiming(const MLPConfig& cfg, std::uint64_t seed) {
  const Mlp net(cfg);
  std::vector<double> p(net.param_count(), 0.0);
  Rng rng = Rng(seed).substream(stream::kInit);
  for (const LayerShape& s : net.layers()) {
    const double fan_in = static_cast<double>(s.in);
    const double wb = std::sqrt(6.0 / fan_in);
    const double bb = 1.0 / std::sqrt(fan_in);
    for (std::size_t k = 0; k < static_cast<std::size_t>(s.in * s.out); ++k) {
      p[s.weight_offset + k] = rng.uniform(-wb, wb);
    }
    for (std::size_t k = 0; k < static_cast<std::size_t>(s.out); ++k) p[s.bias_offset + k] = rng.uniform(-bb, bb);
  }
  return p;
}

enum class DerivOrder { value = 0, first = 1, second = 2 };

inline constexpr int channel_count(DerivOrder o) {
  return o == DerivOrder::value ? 1 : (o == DerivOrder::first ? 4 : 10);
}

/// Second-derivative channels hold d2/dx_i dx_j for these (i, j) pairs.
inline constexpr std::array<std::array<int, 2>, 6> kHessianPairs = {
    {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}}};

inline constexpr int hessian_pair(int i, int j) {
  if (i > j) std::swap(i, j);
  if (i == 0) return j;
  if (i == 1) return 2 + j;
  return 5;
}

/// Batched forward pass with input-derivative channels, recorded per layer so
/// that backward() can return exact parameter gradients of any scalar built
/// from outputs and their input derivatives.
///
/// Every matrix is laid out as rows x (channels * batch); column c * batch + n
/// holds channel c of point n. Channel 0 is the value, 1..3 the first
/// derivatives, 4..9 the second derivatives in kHessianPairs order.
class BatchTape {
 public:
  BatchTape(const Mlp& net, std::span<const double> params, std::span<const Vec3> points, DerivOrder order)
      : net_(&net), params_(params), order_(order), n_(static_cast<Eigen::Index>(points.size())) {
    net.check_params(params.size());
    const int c = channel_count(order);
    const Eigen::Index cols = n_ * c;
    x_stack_ = Eigen::MatrixXd::Zero(3, cols);
    for (Eigen::Index k = 0; k < n_; ++k) {
      const Vec3& p = points[static_cast<std::size_t>(k)];
      if (!is_finite(p)) throw NumericFault("non-finite evaluation point");
      for (int a = 0; a < 3; ++a) x_stack_(a, k) = p[static_cast<std::size_t>(a)];
    }
    if (c > 1) {
      for (int a = 0; a < 3; ++a) x_stack_.row(a).segment((1 + a) * n_, n_).setOnes();
    }

    const auto& layers = net.layers();
    const std::size_t last = layers.size() - 1;
    const double beta = net.config().softplus_beta;
    inputs_.resize(layers.size());
    pre_.resize(last);
    slope_.resize(last);
    Eigen::MatrixXd h = x_stack_;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (static_cast<int>(l) == net.config().skip_layer) {
        Eigen::MatrixXd cat(h.rows() + 3, cols);
        cat.topRows(h.rows()) = h;
        cat.bottomRows(3) = x_stack_;
        h = cat * kInvSqrt2;
      }
      inputs_[l] = std::move(h);
      Eigen::MatrixXd z = net.weights(params, l) * inputs_[l];
      z.leftCols(n_).colwise() += net.bias(params, l);
      if (l == last) {
        out_ = std::move(z);
        break;
      }
      h = activate(z, beta, l);
      pre_[l] = std::move(z);
    }
  }

  Eigen::Index batch() const { return n_; }
  int channels() const { return channel_count(order_); }
  DerivOrder order() const { return order_; }
  const Eigen::MatrixXd& outputs() const { return out_; }

  double output(int k, Eigen::Index n) const { return out_(k, n); }
  double jacobian(int k, Eigen::Index n, int axis) const { return out_(k, (1 + axis) * n_ + n); }
  double hessian(int k, Eigen::Index n, int pair) const { return out_(k, (4 + pair) * n_ + n); }

  /// Accumulates d(loss)/d(params) into `grad`, given d(loss)/d(outputs) in the
  /// same channel layout as outputs().
  void backward(const Eigen::MatrixXd& out_adjoint, std::span<double> grad) const {
    const Mlp& net = *net_;
    net.check_params(grad.size());
    if (out_adjoint.rows() != out_.rows() || out_adjoint.cols() != out_.cols()) {
      throw UsageError("output adjoint does not match the recorded batch");
    }
    const auto& layers = net.layers();
    const int in_dim = net.config().in_dim;
    Eigen::MatrixXd g = out_adjoint;
    for (std::size_t l = layers.size(); l-- > 0;) {
      const LayerShape& s = layers[l];
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
          grad.data() + s.weight_offset, s.out, s.in);
      Eigen::Map<Eigen::VectorXd> gb(grad.data() + s.bias_offset, s.out);
      // Owned temporaries keep rounding independent of grad alignment.
      const Eigen::MatrixXd dw = g * inputs_[l].transpose();
      const Eigen::VectorXd db = g.leftCols(n_).rowwise().sum();
      gw += dw;
      gb += db;
      if (l == 0) break;
      Eigen::MatrixXd a_bar = net.weights(params_, l).transpose() * g;
      if (static_cast<int>(l) == net.config().skip_layer) {
        a_bar = a_bar.topRows(a_bar.rows() - in_dim).eval() * kInvSqrt2;
      }
      g = activate_backward(a_bar, l - 1);
    }
  }

 private:
  auto block(Eigen::MatrixXd& m, int c) const { return m.middleCols(c * n_, n_); }
  auto block(const Eigen::MatrixXd& m, int c) const { return m.middleCols(c * n_, n_); }

  // sigma = s, s' = beta s (1 - s), s'' = beta^2 s (1 - s)(1 - 2 s) of the
  // value channel, stored for the backward pass.
  struct Slopes {
    Eigen::MatrixXd s, s1, s2;
  };

  Eigen::MatrixXd activate(const Eigen::MatrixXd& z, double beta, std::size_t l) {
    Eigen::MatrixXd a(z.rows(), z.cols());
    const auto z0 = block(z, 0);
    Slopes& sl = slope_[l];
    sl.s = (1.0 + (-beta * z0.array()).exp()).inverse().matrix();
    block(a, 0) = softplus_array(z0, beta);
    if (order_ == DerivOrder::value) return a;
    for (int i = 0; i < 3; ++i) block(a, 1 + i) = sl.s.cwiseProduct(block(z, 1 + i));
    if (order_ == DerivOrder::first) return a;
    sl.s1 = beta * sl.s.cwiseProduct((1.0 - sl.s.array()).matrix());
    sl.s2 = beta * sl.s1.cwiseProduct((1.0 - 2.0 * sl.s.array()).matrix());
    for (int p = 0; p < 6; ++p) {
      const auto [i, j] = kHessianPairs[static_cast<std::size_t>(p)];
      block(a, 4 + p) = (sl.s1.array() * block(z, 1 + i).array() * block(z, 1 + j).array() +
                         sl.s.array() * block(z, 4 + p).array())
                            .matrix();
    }
    return a;
  }

  Eigen::MatrixXd activate_backward(const Eigen::MatrixXd& a_bar, std::size_t l) const {
    const Eigen::MatrixXd& z = pre_[l];
    const Slopes& sl = slope_[l];
    Eigen::MatrixXd z_bar(a_bar.rows(), a_bar.cols());
    block(z_bar, 0) = sl.s.cwiseProduct(block(a_bar, 0));
    if (order_ == DerivOrder::value) return z_bar;
    const Eigen::MatrixXd s1 =
        order_ == DerivOrder::second
            ? sl.s1
            : (net_->config().softplus_beta * sl.s.cwiseProduct((1.0 - sl.s.array()).matrix())).eval();
    for (int i = 0; i < 3; ++i) {
      block(z_bar, 1 + i) = sl.s.cwiseProduct(block(a_bar, 1 + i));
      block(z_bar, 0).array() += s1.array() * block(z, 1 + i).array() * block(a_bar, 1 + i).array();
    }
    if (order_ == DerivOrder::first) return z_bar;
    for (int p = 0; p < 6; ++p) {
      const auto [i, j] = kHessianPairs[static_cast<std::size_t>(p)];
      const auto ab = block(a_bar, 4 + p).array();
      block(z_bar, 4 + p) = sl.s.cwiseProduct(block(a_bar, 4 + p));
      block(z_bar, 0).array() += (sl.s2.array() * block(z, 1 + i).array() * block(z, 1 + j).array() +
                                  s1.array() * block(z, 4 + p).array()) *
                                 ab;
      block(z_bar, 1 + i).array() += s1.array() * block(z, 1 + j).array() * ab;
      block(z_bar, 1 + j).array() += s1.array() * block(z, 1 + i).array() * ab;
    }
    return z_bar;
  }

  const Mlp* net_;
  std::span<const double> params_;
  DerivOrder order_;
  Eigen::Index n_;
  Eigen::MatrixXd x_stack_;
  std::vector<Eigen::MatrixXd> inputs_;
  std::vector<Eigen::MatrixXd> pre_;
  std::vector<Slopes> slope_;
  Eigen::MatrixXd out_;
};

}  // namespace pinc
