// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "nf/tensor.hpp"

namespace nf::quant {

// T = (1/√n)·Hₙ·D with Hₙ the Sylvester Hadamard matrix and D a seeded ±1
// diagonal. T is orthogonal.
struct HadamardTransform {
  std::size_t n = 1;
  std::uint64_t seed = 0;
  std::vector<double> matrix;  // n×n row-major
  std::vector<int> signs;      // diagonal of D

  double at(std::size_t i, std::size_t j) const { return matrix[i * n + j]; }
};

inline constexpr std::size_t kRhtBlock = 16;

// Throws ConfigError unless n is a power of two.
HadamardTransform random_hadamard(std::size_t n, std::uint64_t seed);

// Applies T blockwise along `axis` of a 2-D tensor: axis 1 maps each row
// segment x to x·T, axis 0 maps each column segment y to Tᵀ·y, so that
// apply_rht(A, T, 1) · apply_rht(B, T, 0) = A·B. The axis length must be a
// multiple of n (DimensionError otherwise). Accumulates in double.
Tensor apply_rht(const Tensor& t, const HadamardTransform& transform, std::size_t axis);

}  // namespace nf::quant
