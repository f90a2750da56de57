// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nf/quant/formats.hpp"
#include "nf/tensor.hpp"

namespace nf::quant {

// Tensors are viewed as [rows × cols] with cols the last axis.
enum class BlockLayout {
  k1d16,     // 16 consecutive elements of one row
  k2d16x16,  // 16×16 tiles
};

inline constexpr std::size_t kNvfp4Block = 16;

struct QuantizedNvfp4 {
  Shape shape;
  BlockLayout layout = BlockLayout::k1d16;
  std::size_t rows = 0, cols = 0;
  // Zero-padded extent covered by whole blocks.
  std::size_t padded_rows = 0, padded_cols = 0;
  float global_scale = 1.0f;
  // One E4M3 code per block, row-major over the block grid.
  std::vector<std::uint8_t> block_scales;
  // One E2M1 code per padded element, row-major; padding codes are 0.
  std::vector<E2m1Code> codes;

  std::size_t block_rows() const;  // rows of the block grid
  std::size_t block_cols() const;
  std::size_t block_of(std::size_t r, std::size_t c) const;
};

// Smallest global scale used when the tensor amax is zero or tiny.
inline constexpr float kMinGlobalScale = 1e-30f;

// Two-level scaling: global = amax(t) / (6·448) floored at kMinGlobalScale,
// block scale = E4M3 round-up of amax(block) / (6·global), element code =
// E2M1(x / (scale·global)). An explicit global scale replaces the amax rule.
// Stochastic rounding draws per element with the element's flat index.
QuantizedNvfp4 quantize_nvfp4(const Tensor& t, BlockLayout layout = BlockLayout::k1d16,
                              RoundingMode mode = {},
                              std::optional<float> global_scale = std::nullopt);

// Element = decode(code) × decode(block scale) × global, padding dropped.
Tensor dequantize_nvfp4(const QuantizedNvfp4& q);

}  // namespace nf::quant
