#pragma once

#include <cmath>

#include "deeplda/errors.hpp"
#include "deeplda/matrix.hpp"

namespace deeplda {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Vec m, v;
  long t = 0;

  explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One Adam update in place: params -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(Vec& params, const Vec& grad, AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw ShapeMismatch("adam_step: parameter, gradient, and state sizes differ");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace deeplda
