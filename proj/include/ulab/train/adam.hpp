#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ulab/core/error.hpp"

namespace ulab::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  std::vector<float> m, v;
  std::int64_t t = 0;

  static OptimState zeros(std::size_t n) {
    OptimState s;
    s.m.assign(n, 0.0f);
    s.v.assign(n, 0.0f);
    return s;
  }
};

// Bias-corrected Adam update followed by decoupled weight decay:
// params <- params - lr * m_hat / (sqrt(v_hat) + eps); params -= lr * wd * params.
inline void adam_step(OptimState& st, std::vector<float>& params, const std::vector<float>& grad,
                      double lr, double weight_decay, const AdamConfig& cfg = {}) {
  ULAB_CHECK(st.m.size() == params.size() && grad.size() == params.size(),
             "optimizer state / gradient length mismatch");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    ULAB_CHECK(std::isfinite(g), "non-finite gradient in adam_step");
    const double m = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
    st.m[i] = static_cast<float>(m);
    st.v[i] = static_cast<float>(v);
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    double p = static_cast<double>(params[i]) - lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    p -= lr * weight_decay * p;
    params[i] = static_cast<float>(p);
  }
}

}  // namespace ulab::train
