#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepaer/errors.hpp"
#include "deepaer/model.hpp"

namespace deepaer {

struct AdamConfig {
  double alpha = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers, one pair per parameter group, plus the shared
// step counter.
template <typename T>
struct AdamState {
  AdamConfig cfg;
  long long t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  template <typename Refs>
  static AdamState init(const Refs& params, const AdamConfig& cfg = {}) {
    AdamState st;
    st.cfg = cfg;
    for (const auto& p : params) {
      st.m.emplace_back(p.values.size(), T(0));
      st.v.emplace_back(p.values.size(), T(0));
    }
    return st;
  }
};

// One Adam update of a single array:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   mhat = m / (1 - b1^t); vhat = v / (1 - b2^t)
//   theta <- theta - alpha * mhat / sqrt(vhat + eps)
// Note the epsilon sits inside the square root.
template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 long long t, const AdamConfig& cfg) {
  if (theta.size() != grad.size() || theta.size() != m.size() || theta.size() != v.size())
    throw DimensionError("adam: parameter/gradient/moment size mismatch");
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T one_m_b1 = static_cast<T>(1.0 - cfg.beta1);
  const T one_m_b2 = static_cast<T>(1.0 - cfg.beta2);
  const T mc = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta1, static_cast<double>(t))));
  const T vc = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta2, static_cast<double>(t))));
  const T alpha = static_cast<T>(cfg.alpha);
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + one_m_b1 * g;
    v[i] = b2 * v[i] + one_m_b2 * g * g;
    const T mhat = m[i] * mc;
    const T vhat = v[i] * vc;
    theta[i] -= alpha * mhat / std::sqrt(vhat + eps);
  }
}

// Whole-model step. The step counter is incremented before the bias
// corrections, so the first call uses t = 1.
template <typename T>
void adam_step(std::vector<ParamRef<T>>& params, const GradBundle<T>& grads, AdamState<T>& st) {
  if (params.size() != grads.groups.size() || params.size() != st.m.size())
    throw DimensionError("adam: group count mismatch");
  ++st.t;
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (params[g].values.size() != grads.groups[g].size())
      throw DimensionError("adam: gradient shape mismatch in group '" + params[g].name + "'");
    for (T gv : grads.groups[g])
      if (!std::isfinite(static_cast<double>(gv)))
        throw NumericError("adam: non-finite gradient in group '" + params[g].name + "'");
    adam_update(params[g].values, std::span<const T>(grads.groups[g]),
                std::span<T>(st.m[g]), std::span<T>(st.v[g]), st.t, st.cfg);
  }
}

}  // namespace deepaer
