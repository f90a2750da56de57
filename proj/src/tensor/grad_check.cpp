// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"

namespace nf {

GradCheckResult grad_check_detailed(const std::function<Tensor()>& f, Tensor x,
                                    double eps) {
  const bool had_grad = x.requires_grad();
  x.set_requires_grad(true);
  x.impl().grad.clear();
  x.impl().shadow.clear();

  std::vector<float> analytic(x.numel(), 0.0f);
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    if (loss.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
    if (tape.produced(loss)) backward(tape, loss);
    if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
  }

  GradCheckResult result;
  NoGradScope no_grad;
  // The finite-difference side is evaluated in double so float32 rounding of
  // intermediates does not swamp small coordinates.
  PreciseScope precise;
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float saved = data[i];
    // Perturb by the representable step so the divisor matches the actual
    // displacement.
    const float plus = static_cast<float>(saved + eps);
    const float minus = static_cast<float>(saved - eps);
    data[i] = plus;
    const double fp = f().precise_item();
    data[i] = minus;
    const double fm = f().precise_item();
    data[i] = saved;
    const double numeric = (fp - fm) / (double(plus) - double(minus));
    const double a = analytic[i];
    const double mag = std::max(std::abs(a), std::abs(numeric));
    const double err = mag < 1e-6 ? std::abs(a - numeric) : std::abs(a - numeric) / mag;
    if (err > result.max_rel_error || i == 0) {
      result.max_rel_error = std::max(result.max_rel_error, err);
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  x.impl().grad.clear();
  x.set_requires_grad(had_grad);
  return result;
}

double grad_check(const std::function<Tensor()>& f, Tensor x, double eps) {
  return grad_check_detailed(f, x, eps).max_rel_error;
}

}  // namespace nf
