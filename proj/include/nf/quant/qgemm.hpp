// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "nf/quant/formats.hpp"
#include "nf/quant/nvfp4.hpp"
#include "nf/tensor.hpp"

namespace nf::quant {

struct OperandQuant {
  Format format = Format::kReference;
  BlockLayout layout = BlockLayout::k1d16;  // NVFP4 only
  RoundingMode rounding;
};

struct QgemmOptions {
  OperandQuant a, b;
  // Rotate both operands with one random Hadamard transform across the
  // contraction dimension before quantizing.
  bool rht = false;
  std::uint64_t rht_seed = 0;
  std::size_t rht_block = kRhtBlockDefault;

  static constexpr std::size_t kRhtBlockDefault = 16;
};

// Quantize then dequantize a 2-D tensor. Blocks run along `axis`: 1 groups
// elements of a row, 0 groups elements of a column. Reference format returns
// an unchanged copy.
Tensor fake_quantize(const Tensor& t, const OperandQuant& q, std::size_t axis = 1);

// a[m×k] · b[k×n] with each operand quantize-dequantized along the
// contraction dimension, then multiplied with the reference matmul kernel.
// With rht, the contraction dimension is zero-padded to a multiple of the
// transform size first. Not recorded on any tape.
Tensor qgemm_sim(const Tensor& a, const Tensor& b, const QgemmOptions& options);

// Fraction of nonzero elements whose quantized code decodes to zero
// (nearest-even). Throws UndefinedRateError when t has no nonzero element.
double flush_to_zero_rate(const Tensor& t, Format format,
                          BlockLayout layout = BlockLayout::k1d16);

}  // namespace nf::quant
