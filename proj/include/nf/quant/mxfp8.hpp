// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "nf/quant/formats.hpp"
#include "nf/tensor.hpp"

namespace nf::quant {

inline constexpr std::size_t kMxfp8Block = 32;

struct QuantizedMxfp8 {
  Shape shape;
  std::size_t rows = 0, cols = 0, padded_cols = 0;
  // One E8M0 code per 32-element block along the last axis.
  std::vector<std::uint8_t> block_scales;
  // One E4M3 code per padded element; padding codes are 0.
  std::vector<std::uint8_t> codes;
};

// Block exponent is the smallest k with amax ≤ 448·2^k, clamped to the E8M0
// range, so scaled elements never saturate. All-zero blocks use exponent 0.
QuantizedMxfp8 quantize_mxfp8(const Tensor& t, RoundingMode mode = {});

// Element = decode_e4m3(code) × 2^exponent, padding dropped.
Tensor dequantize_mxfp8(const QuantizedMxfp8& q);

}  // namespace nf::quant
