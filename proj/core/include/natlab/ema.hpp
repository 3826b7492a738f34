#pragma once

#include "natlab/model.hpp"
#include "natlab/tensor.hpp"

namespace natlab {

struct EmaConfig {
  double alpha = 0.996;

  void validate() const {
    check(alpha >= 0.0 && alpha <= 1.0, "ema alpha must lie in [0, 1], got ", alpha);
  }
};

// Average-model initialization: a deep, value-equal copy of the online
// store. The average is never trained by gradient; its only update path is
// ema_step.
template <class T>
ParamStore<T> init_average(const ParamStore<T>& online) {
  return online;
}

// theta'_t = alpha * theta'_{t-1} + (1 - alpha) * theta_t, element-wise over
// every parameter. Applied once per optimizer step. Key sets and shapes must
// match exactly; no names are ever added or dropped.
template <class T>
void ema_step(ParamStore<T>& average, const ParamStore<T>& online, double alpha) {
  check(average.size() == online.size(), "ema_step: stores hold ", average.size(), " vs ",
        online.size(), " tensors");
  const T a = static_cast<T>(alpha);
  const T b = static_cast<T>(1.0 - alpha);
  for (auto& [name, avg] : average) {
    check(online.contains(name), "ema_step: online store lacks '", name, "'");
    const TensorData<T>& on = online.at(name);
    check(avg.shape == on.shape, "ema_step: shape mismatch for '", name, "': ",
          shape_str(avg.shape), " vs ", shape_str(on.shape));
    for (int64_t i = 0; i < avg.size(); ++i) avg.at(i) = a * avg.at(i) + b * on.at(i);
  }
}

}  // namespace natlab
