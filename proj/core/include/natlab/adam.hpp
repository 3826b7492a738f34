#pragma once

#include <cmath>

#include "natlab/tensor.hpp"

namespace natlab {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

template <class T>
struct AdamState {
  TensorMap<T> m;  // first moments
  TensorMap<T> v;  // second moments
  int64_t t = 0;   // completed steps
};

template <class T>
AdamState<T> init_adam(const TensorMap<T>& params) {
  AdamState<T> s;
  for (const auto& [name, p] : params) {
    s.m.emplace(name, TensorData<T>(p.shape, T(0)));
    s.v.emplace(name, TensorData<T>(p.shape, T(0)));
  }
  return s;
}

template <class T>
double global_grad_norm(const TensorMap<T>& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (int64_t i = 0; i < g.size(); ++i) {
      const double x = static_cast<double>(g.at(i));
      sq += x * x;
    }
  return std::sqrt(sq);
}

// Scales all gradients so the global norm does not exceed max_norm.
// max_norm <= 0 disables clipping.
template <class T>
double clip_grads(TensorMap<T>& grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& [name, g] : grads)
      for (int64_t i = 0; i < g.size(); ++i) g.at(i) *= s;
  }
  return norm;
}

// One bias-corrected Adam update on the online parameters.
template <class T>
void adam_step(TensorMap<T>& params, AdamState<T>& state, const TensorMap<T>& grads, double lr,
               const AdamConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T one_m_b1 = static_cast<T>(1.0 - cfg.beta1), one_m_b2 = static_cast<T>(1.0 - cfg.beta2);
  for (auto& [name, p] : params) {
    const TensorData<T>& g = grads.at(name);
    check(g.shape == p.shape, "adam_step: gradient shape mismatch for '", name, "': ",
          shape_str(g.shape), " vs ", shape_str(p.shape));
    TensorData<T>& m = state.m.at(name);
    TensorData<T>& v = state.v.at(name);
    for (int64_t i = 0; i < p.size(); ++i) {
      const T gi = g.at(i);
      m.at(i) = b1 * m.at(i) + one_m_b1 * gi;
      v.at(i) = b2 * v.at(i) + one_m_b2 * gi * gi;
      const double mhat = static_cast<double>(m.at(i)) / bc1;
      const double vhat = static_cast<double>(v.at(i)) / bc2;
      p.at(i) -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace natlab
