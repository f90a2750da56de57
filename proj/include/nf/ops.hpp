// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nf/tensor.hpp"

namespace nf {

using TokenId = std::int32_t;

namespace kernels {

// c[m×n] = a[m×k] · b[k×n]. For every output element the products are summed
// in ascending k starting from zero, the same order as the textbook triple
// loop, so results are bit-identical to it and row i depends only on row i of
// `a`.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// out[n×m] = in[m×n]ᵀ.
template <typename T>
void transpose(const T* in, T* out, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  }
}

}  // namespace kernels

// All operations below record a backward rule on the active tape when an
// input requires gradients.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
// x[R×C] + bias[C] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x[R×C] with row r multiplied by s[r]; s has R elements.
Tensor scale_rows(const Tensor& x, const Tensor& s);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);

// Numerically stable softmax along `axis` (max subtracted before exp).
Tensor softmax(const Tensor& x, std::size_t axis);
// x / sqrt(mean(x², last axis) + eps) · weight.
Tensor rms_norm(const Tensor& x, const Tensor& weight, float eps);
// Mean over rows of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Rows of table[V×d] selected by ids → [T×d].
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);
// Columns [begin, end) of x[R×C].
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// out[r][j] = x[r][index[r·K + j]] for x[R×C], index of length R·K → [R×K].
Tensor gather_cols(const Tensor& x, std::span<const std::size_t> index, std::size_t k);
// Flat elements of x → column [n×1].
Tensor gather_elements(const Tensor& x, std::span<const std::size_t> flat_index);

struct RowContribution {
  std::vector<std::size_t> rows;
  Tensor values;  // [rows.size() × width]
};
// out[rows × width] = 0, then each contribution added into its rows in list
// order.
Tensor index_add_rows(std::size_t rows, std::size_t width,
                      const std::vector<RowContribution>& parts);

}  // namespace nf
