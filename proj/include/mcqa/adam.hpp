#pragma once

#include <cmath>
#include <cstdint>

#include "mcqa/error.hpp"
#include "mcqa/param_store.hpp"

namespace mcqa {

// Adam with bias correction. Moment slots live in the ParameterStore; this
// struct carries the hyperparameters and the shared step counter.
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
};

// m <- b1 m + (1-b1) g ; v <- b2 v + (1-b2) g^2 ; theta <- theta -
// lr * m_hat / (sqrt(v_hat) + eps). Zeroes the gradients afterwards.
inline void adam_step(ParameterStore& store, AdamState& state) {
  for (std::size_t p = 0; p < store.size(); ++p)
    if (!store.grad(p).same_shape(store.value(p)))
      fail("adam_step: gradient missing or mis-shaped for parameter '",
           store.name(p), "'");
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < store.size(); ++p) {
    Tensor& theta = store.value(p);
    Tensor& g = store.grad(p);
    Tensor& m = store.adam_m(p);
    Tensor& v = store.adam_v(p);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    g.fill(0.0);
  }
}

}  // namespace mcqa
