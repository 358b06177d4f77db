#pragma once

// Adam with a stepwise exponential learning-rate schedule.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pinc/common.hpp"

namespace pinc {

struct Schedule {
  double lr0 = 1e-3;
  double decay = 0.99;
  std::int64_t decay_every = 2000;

  void validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay must lie in (0, 1]");
    if (decay_every < 1) throw ConfigError("decay_every must be at least 1");
  }
};

/// lr0 * decay^floor(iter / decay_every).
inline double lr_at(std::int64_t iter, const Schedule& s) {
  return s.lr0 * std::pow(s.decay, static_cast<double>(iter / s.decay_every));
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update. `iter` only labels the fault message.
inline void adam_step(std::span<double> params, std::span<const double> grad, AdamState& st, double lr,
                      std::int64_t iter = -1) {
  if (grad.size() != params.size() || st.m.size() != params.size() || st.v.size() != params.size()) {
    throw UsageError("optimizer shapes do not match the parameters");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericFault("non-finite gradient at iteration " + std::to_string(iter) + " (parameter " +
                         std::to_string(i) + ")");
    }
  }
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

}  // namespace pinc
