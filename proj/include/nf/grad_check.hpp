// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "nf/tensor.hpp"

namespace nf {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
};

// Compares the tape gradient of the scalar f() with respect to x against
// central differences (f(x+εeᵢ) − f(x−εeᵢ)) / 2ε, one coordinate at a time.
// The differences are evaluated under a PreciseScope. x is perturbed in
// place and restored. The per-coordinate error is
// |a − n| / max(|a|, |n|), or |a − n| when both magnitudes are below 1e-6.
// f must read x through the handle it captured.
GradCheckResult grad_check_detailed(const std::function<Tensor()>& f, Tensor x,
                                    double eps = 1e-3);

double grad_check(const std::function<Tensor()>& f, Tensor x, double eps = 1e-3);

}  // namespace nf
