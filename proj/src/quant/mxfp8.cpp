// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/quant/mxfp8.hpp"

#include <algorithm>
#include <cmath>

#include "nf/error.hpp"

namespace nf::quant {

namespace {

// Smallest k with amax <= 448·2^k, computed exactly with ldexp.
int block_exponent(float amax) {
  int e = 0;
  std::frexp(double(amax) / kE4m3Max, &e);
  int k = e;
  while (k > kE8m0MinExponent - 2 && std::ldexp(double(kE4m3Max), k - 1) >= amax) --k;
  while (std::ldexp(double(kE4m3Max), k) < amax) ++k;
  return std::clamp(k, kE8m0MinExponent, kE8m0MaxExponent);
}

}  // namespace

QuantizedMxfp8 quantize_mxfp8(const Tensor& t, RoundingMode mode) {
  QuantizedMxfp8 q;
  q.shape = t.shape();
  q.rows = t.rows();
  q.cols = t.cols();
  q.padded_cols = (q.cols + kMxfp8Block - 1) / kMxfp8Block * kMxfp8Block;
  const std::size_t bcols = q.padded_cols / kMxfp8Block;
  q.block_scales.assign(q.rows * bcols, encode_e8m0(0));
  q.codes.assign(q.rows * q.padded_cols, 0);
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NumericInputError("quantize_mxfp8: non-finite input");
  }
  for (std::size_t r = 0; r < q.rows; ++r) {
    for (std::size_t b = 0; b < bcols; ++b) {
      const std::size_t c0 = b * kMxfp8Block;
      const std::size_t c1 = std::min(q.cols, c0 + kMxfp8Block);
      float amax = 0.0f;
      for (std::size_t c = c0; c < c1; ++c) amax = std::max(amax, std::abs(t[r * q.cols + c]));
      if (amax == 0.0f) continue;
      const int k = block_exponent(amax);
      q.block_scales[r * bcols + b] = encode_e8m0(k);
      for (std::size_t c = c0; c < c1; ++c) {
        const std::size_t flat = r * q.cols + c;
        q.codes[r * q.padded_cols + c] =
            encode_e4m3(std::ldexp(double(t[flat]), -k), mode, flat);
      }
    }
  }
  return q;
}

Tensor dequantize_mxfp8(const QuantizedMxfp8& q) {
  Tensor out(q.shape);
  auto o = out.mutable_data();
  const std::size_t bcols = q.padded_cols / kMxfp8Block;
  for (std::size_t r = 0; r < q.rows; ++r) {
    for (std::size_t c = 0; c < q.cols; ++c) {
      const float s = decode_e8m0(q.block_scales[r * bcols + c / kMxfp8Block]);
      o[r * q.cols + c] = decode_e4m3(q.codes[r * q.padded_cols + c]) * s;
    }
  }
  return out;
}

}  // namespace nf::quant
