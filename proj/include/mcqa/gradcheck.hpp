#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mcqa/autograd.hpp"
#include "mcqa/param_store.hpp"

namespace mcqa {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> params;  // one entry per parameter, store order
  bool pass(double threshold = 1e-4) const { return max_rel_err <= threshold; }
};

// Builds a scalar-valued graph over the store's parameters. Must be a
// deterministic function of the store contents.
using ScalarGraphFn = std::function<Var(Tape&, ParameterStore&)>;

// Floor of the relative-error denominator. A central difference of a scalar
// f carries ~ulp(f)/(2 eps) cancellation noise (about 1e-11 at f ~ 1 and eps
// 1e-5), so entries whose gradient sits below the floor are compared against
// the floor itself; 1e-6 keeps the implied absolute tolerance (threshold x
// floor) an order of magnitude above that noise at 64-bit precision.
inline constexpr double kGradCheckDenominatorFloor = 1e-6;

// Central finite differences against the analytic gradient, elementwise over
// every parameter entry. The per-entry relative error uses the denominator
// max(|analytic|, |numeric|, floor). Leaves the analytic gradients in the
// store.
inline GradCheckReport finite_difference_check(const ScalarGraphFn& fn,
                                               ParameterStore& store,
                                               double eps = 1e-5) {
  const auto eval = [&]() -> double {
    Tape tape;
    Var out = fn(tape, store);
    if (out.value().size() != 1)
      fail("finite_difference_check: function output must be scalar");
    return out.value()[0];
  };

  store.zero_grads();
  {
    Tape tape;
    Var out = fn(tape, store);
    if (out.value().size() != 1)
      fail("finite_difference_check: function output must be scalar");
    tape.backward(out, store);
  }

  GradCheckReport report;
  report.params.reserve(store.size());
  for (std::size_t p = 0; p < store.size(); ++p) {
    GradCheckEntry entry;
    entry.name = store.name(p);
    Tensor& theta = store.value(p);
    const Tensor& analytic = store.grad(p);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double saved = theta[k];
      theta[k] = saved + eps;
      const double f_plus = eval();
      theta[k] = saved - eps;
      const double f_minus = eval();
      theta[k] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double denom = std::max(
          {std::abs(analytic[k]), std::abs(numeric), kGradCheckDenominatorFloor});
      const double rel = std::abs(analytic[k] - numeric) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace mcqa
