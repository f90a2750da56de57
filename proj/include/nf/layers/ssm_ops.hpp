// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "nf/tensor.hpp"

namespace nf {

// clamp(softplus(u), lo, hi) elementwise. The gradient is zero wherever the
// clamp is active.
Tensor softplus_clamp(const Tensor& u, float lo, float hi);

struct ConvResult {
  Tensor y;                       // [T×C], before activation
  std::vector<float> tail;        // last W−1 input rows, [(W−1)×C]
};

// Depthwise causal convolution over time. x[T×C], weight[W×C], bias[C];
// `tail` holds the W−1 rows that precede x (zeros at sequence start):
//   y[t][c] = bias[c] + Σ_k weight[k][c] · xx[t+k][c],  xx = tail ++ x
// `tail` is constant: no gradient flows into it.
ConvResult causal_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         std::span<const float> tail);

struct ScanResult {
  Tensor y;                       // [T×H·P]
  std::vector<float> state;       // final h, [H×P×N]
};

// Selective state-space scan with a scalar decay per head and B, C shared
// across heads. x[T×H·P], dt[T×H], a[H] (negative), b[T×N], c[T×N], d[H],
// h0 of H·P·N values. For every head h, channel p and state n:
//   h_t = exp(dt_t·a)·h_{t−1} + dt_t·b_t[n]·x_t[p]
//   y_t[p] = Σ_n c_t[n]·h_t[n] + d·x_t[p]
// h0 is constant: no gradient flows into it.
ScanResult ssm_scan(const Tensor& x, const Tensor& dt, const Tensor& a, const Tensor& b,
                    const Tensor& c, const Tensor& d, std::span<const float> h0);

}  // namespace nf
