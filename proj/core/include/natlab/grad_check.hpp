#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "natlab/tape.hpp"
#include "natlab/tensor.hpp"

namespace natlab {

// Compares reverse-mode gradients against central finite differences over
// every parameter coordinate. The loss builder must be deterministic given
// the store (dropout off or seed-pinned), since it is re-evaluated at
// perturbed parameters.

template <class T>
struct GradCheckViolation {
  std::string param;
  int64_t index = 0;
  T analytic = T(0);
  T numeric = T(0);
  T rel_err = T(0);
};

template <class T>
struct GradCheckReport {
  T max_rel_err = T(0);
  std::string worst_param;
  int64_t worst_index = 0;
  int64_t n_coords = 0;
  std::vector<GradCheckViolation<T>> violations;  // coordinates exceeding tolerance

  bool ok() const { return violations.empty(); }
};

// rel(a, n) = |a - n| / max(|a| + |n|, 1): relative where gradients are
// large, absolute where they vanish, so finite-difference noise on
// near-zero coordinates cannot dominate.
template <class T>
T grad_check_rel_err(T analytic, T numeric) {
  const T denom = std::max(std::abs(analytic) + std::abs(numeric), T(1));
  return std::abs(analytic - numeric) / denom;
}

template <class T>
using LossBuilder = std::function<NodePtr<T>(Tape<T>&, const BoundParams<T>&)>;

template <class T>
GradCheckReport<T> grad_check(const LossBuilder<T>& f, const TensorMap<T>& params, T epsilon,
                              T tolerance) {
  // Analytic pass.
  TensorMap<T> analytic;
  {
    Tape<T> tape(true);
    auto bound = bind_params(tape, params, true);
    auto loss = f(tape, bound);
    check(loss->size() == 1, "grad_check: loss must be scalar, got shape ",
          shape_str(loss->shape));
    tape.backward(loss);
    for (const auto& [name, data] : params) analytic.emplace(name, grad_of(*bound.at(name)));
  }

  auto eval = [&](const TensorMap<T>& at) -> T {
    Tape<T> tape(false);
    auto bound = bind_params(tape, at, false);
    return f(tape, bound)->value[0];
  };

  GradCheckReport<T> report;
  TensorMap<T> probe = params;  // mutated one coordinate at a time
  for (auto& [name, data] : probe) {
    const TensorData<T>& grads = analytic.at(name);
    for (int64_t i = 0; i < data.size(); ++i) {
      const T orig = data.at(i);
      const T h = epsilon * std::max(T(1), std::abs(orig));
      data.at(i) = orig + h;
      const T up = eval(probe);
      data.at(i) = orig - h;
      const T down = eval(probe);
      data.at(i) = orig;
      const T numeric = (up - down) / (T(2) * h);
      const T a = grads.at(i);
      const T rel = grad_check_rel_err(a, numeric);
      ++report.n_coords;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
      if (rel > tolerance) report.violations.push_back({name, i, a, numeric, rel});
    }
  }
  return report;
}

}  // namespace natlab
