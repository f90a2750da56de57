// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/quant/hadamard.hpp"

#include <bit>
#include <cmath>

#include "nf/error.hpp"
#include "nf/rng.hpp"

namespace nf::quant {

HadamardTransform random_hadamard(std::size_t n, std::uint64_t seed) {
  if (n == 0 || !std::has_single_bit(n)) {
    throw ConfigError("Hadamard size must be a power of two, got " + std::to_string(n));
  }
  HadamardTransform t;
  t.n = n;
  t.seed = seed;
  t.signs.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    t.signs[j] = counter_uniform(seed, j) < 0.5 ? -1 : 1;
  }
  const double norm = 1.0 / std::sqrt(double(n));
  t.matrix.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      // Sylvester construction: H[i][j] = (-1)^popcount(i & j).
      const int h = (std::popcount(i & j) % 2 == 0) ? 1 : -1;
      t.matrix[i * n + j] = h * t.signs[j] * norm;
    }
  }
  return t;
}

Tensor apply_rht(const Tensor& t, const HadamardTransform& transform, std::size_t axis) {
  if (t.rank() != 2) throw DimensionError("apply_rht expects a 2-D tensor");
  if (axis > 1) throw DimensionError("apply_rht: axis must be 0 or 1");
  const std::size_t rows = t.dim(0), cols = t.dim(1), n = transform.n;
  const std::size_t len = axis == 1 ? cols : rows;
  if (len % n != 0) {
    throw DimensionError("apply_rht: axis length " + std::to_string(len) +
                         " is not a multiple of " + std::to_string(n));
  }
  Tensor out(t.shape());
  auto o = out.mutable_data();
  std::vector<double> acc(n);
  if (axis == 1) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t b = 0; b < cols; b += n) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double x = t[r * cols + b + i];
          for (std::size_t j = 0; j < n; ++j) acc[j] += x * transform.at(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) o[r * cols + b + j] = static_cast<float>(acc[j]);
      }
    }
  } else {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t b = 0; b < rows; b += n) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double y = t[(b + i) * cols + c];
          // (Tᵀ·y)[j] = Σ_i T[i][j]·y[i]
          for (std::size_t j = 0; j < n; ++j) acc[j] += transform.at(i, j) * y;
        }
        for (std::size_t j = 0; j < n; ++j) o[(b + j) * cols + c] = static_cast<float>(acc[j]);
      }
    }
  }
  return out;
}

}  // namespace nf::quant
