#pragma once

// Central finite-difference gradient oracle. Independent of the tape's
// backward pass: it only re-evaluates the forward function under point
// perturbations of the parameters.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dacount/autograd.hpp"
#include "dacount/rng.hpp"

namespace dacount::testing {

inline void zero_grads(const std::vector<Parameter*>& params) {
  for (auto* p : params) p->grad.fill(0.0);
}

// Freshly built nets have zero biases, which parks ReLU pre-activations
// exactly on the kink where one-sided finite differences disagree with the
// (valid) zero subgradient. Jitter moves the check to a generic point.
inline void jitter_params(const std::vector<Parameter*>& params, uint64_t seed) {
  RngStream rng(seed, "gradcheck_jitter");
  for (auto* p : params)
    for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] += rng.uniform(-0.05, 0.05);
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  int checked = 0;
};

// forward: re-evaluates the scalar loss from current parameter values.
// analytic gradients must already be in p->grad before the call.
// Step trades truncation error against crossing ReLU kinks: 1e-5 keeps both
// below the 1e-4 acceptance threshold in double precision.
inline GradCheckReport finite_diff_check(const std::vector<Parameter*>& params,
                                         const std::function<double()>& forward,
                                         double step = 1e-5) {
  GradCheckReport rep;
  double gmax = 0.0;
  for (auto* p : params) gmax = std::max(gmax, p->grad.abs_max());
  for (auto* p : params) {
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      double orig = p->value[i];
      p->value[i] = orig + step;
      double lp = forward();
      p->value[i] = orig - step;
      double lm = forward();
      p->value[i] = orig;
      double fd = (lp - lm) / (2.0 * step);
      double g = p->grad[i];
      double denom = std::max({std::abs(fd), std::abs(g), 1e-3 * gmax + 1e-10});
      rep.max_rel_err = std::max(rep.max_rel_err, std::abs(fd - g) / denom);
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace dacount::testing
