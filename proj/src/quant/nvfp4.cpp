// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/quant/nvfp4.hpp"

#include <algorithm>
#include <cmath>

#include "nf/error.hpp"

namespace nf::quant {

namespace {

std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

}  // namespace

std::size_t QuantizedNvfp4::block_rows() const {
  return layout == BlockLayout::k1d16 ? padded_rows : padded_rows / kNvfp4Block;
}

std::size_t QuantizedNvfp4::block_cols() const { return padded_cols / kNvfp4Block; }

std::size_t QuantizedNvfp4::block_of(std::size_t r, std::size_t c) const {
  const std::size_t br = layout == BlockLayout::k1d16 ? r : r / kNvfp4Block;
  return br * block_cols() + c / kNvfp4Block;
}

QuantizedNvfp4 quantize_nvfp4(const Tensor& t, BlockLayout layout, RoundingMode mode,
                              std::optional<float> global_scale) {
  QuantizedNvfp4 q;
  q.shape = t.shape();
  q.layout = layout;
  q.rows = t.rows();
  q.cols = t.cols();
  q.padded_cols = round_up(q.cols, kNvfp4Block);
  q.padded_rows = layout == BlockLayout::k1d16 ? q.rows : round_up(q.rows, kNvfp4Block);

  float amax = 0.0f;
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NumericInputError("quantize_nvfp4: non-finite input");
    amax = std::max(amax, std::abs(v));
  }
  if (global_scale) {
    if (!(*global_scale > 0.0f) || !std::isfinite(*global_scale)) {
      throw ContractError("quantize_nvfp4: global scale must be positive and finite");
    }
    q.global_scale = *global_scale;
  } else {
    q.global_scale = std::max(kMinGlobalScale, amax / (6.0f * kE4m3Max));
  }

  const std::size_t nblocks = q.block_rows() * q.block_cols();
  std::vector<float> block_amax(nblocks, 0.0f);
  for (std::size_t r = 0; r < q.rows; ++r) {
    for (std::size_t c = 0; c < q.cols; ++c) {
      float& m = block_amax[q.block_of(r, c)];
      m = std::max(m, std::abs(t[r * q.cols + c]));
    }
  }
  q.block_scales.assign(nblocks, 0);
  const double g = q.global_scale;
  for (std::size_t b = 0; b < nblocks; ++b) {
    if (block_amax[b] == 0.0f) continue;
    q.block_scales[b] = encode_e4m3(block_amax[b] / (6.0 * g), E4m3Rounding::kUp);
  }

  std::vector<double> scale(nblocks, 0.0);
  for (std::size_t b = 0; b < nblocks; ++b) {
    if (q.block_scales[b] != 0) scale[b] = double(decode_e4m3(q.block_scales[b])) * g;
  }
  q.codes.assign(q.padded_rows * q.padded_cols, 0);
  const auto data = t.data();
  for (std::size_t r = 0; r < q.rows; ++r) {
    for (std::size_t c = 0; c < q.cols; ++c) {
      const double s = scale[q.block_of(r, c)];
      if (s == 0.0) continue;
      const std::size_t flat = r * q.cols + c;
      q.codes[r * q.padded_cols + c] = encode_e2m1(data[flat] / s, mode, flat);
    }
  }
  return q;
}

Tensor dequantize_nvfp4(const QuantizedNvfp4& q) {
  Tensor out(q.shape);
  auto o = out.mutable_data();
  std::vector<float> scale(q.block_scales.size());
  for (std::size_t b = 0; b < scale.size(); ++b) scale[b] = decode_e4m3(q.block_scales[b]);
  for (std::size_t r = 0; r < q.rows; ++r) {
    for (std::size_t c = 0; c < q.cols; ++c) {
      const float s = scale[q.block_of(r, c)];
      o[r * q.cols + c] = decode_e2m1(q.codes[r * q.padded_cols + c]) * s * q.global_scale;
    }
  }
  return out;
}

}  // namespace nf::quant
