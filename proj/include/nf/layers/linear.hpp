// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "nf/quant/formats.hpp"
#include "nf/quant/precision.hpp"
#include "nf/rng.hpp"
#include "nf/tensor.hpp"

namespace nf {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

struct ForwardContext {
  // Apply each linear layer's low-precision format. When false every GEMM
  // runs in reference precision.
  bool quantize = true;
  // Mixed into the stochastic-rounding streams; training passes the step.
  std::uint64_t seed = 0;
};

// x[m×k] · w[k×n] where both operands are quantize-dequantized in `format`.
//
//   forward:  Q(x) with 1-D blocks, round-to-nearest; Q(w) with 2-D blocks
//   dgrad:    Q(dy) with stochastic rounding; Q(w) as in forward
//   wgrad:    Q(xᵀ) round-to-nearest; Q(dy) stochastic; random Hadamard
//             transform across tokens for NVFP4
//
// Gradients pass straight through the quantizers. Reference format is plain
// matmul.
Tensor quantized_matmul(const Tensor& x, const Tensor& w, quant::Format format,
                        std::uint64_t seed);
// Same, with `w_quantized` = Q(w) computed by quantize_weight. Transposing a
// 16×16-tiled weight maps tiles onto tiles, so one copy serves both fprop
// and dgrad.
Tensor quantized_matmul(const Tensor& x, const Tensor& w, const Tensor& w_quantized,
                        quant::Format format, std::uint64_t seed);
// Q(w) with 16×16 tiles and round-to-nearest.
Tensor quantize_weight(const Tensor& w, quant::Format format);

class Linear {
 public:
  Linear() = default;
  // Weight [in×out] drawn from N(0, init_std²).
  Linear(std::size_t in, std::size_t out, quant::LinearKind kind, Rng& rng, double init_std);

  // x[T×in] → [T×out].
  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  quant::LinearKind kind() const { return kind_; }
  quant::Format format() const { return format_; }
  void set_format(quant::Format f) { format_ = f; }
  // Distinguishes stochastic-rounding streams between layers.
  std::uint64_t id() const { return id_; }
  void set_id(std::uint64_t id) { id_ = id; }

  const Tensor& weight() const { return weight_; }
  // Replaces the weight handle; the shape must not change.
  void set_weight(Tensor w);
  void append_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  struct QuantCache {
    std::mutex mutex;
    std::vector<float> source;  // weight values `quantized` was derived from
    quant::Format format = quant::Format::kReference;
    Tensor quantized;
  };
  // Q(weight), recomputed only when the weight values or format change.
  Tensor quantized_weight() const;

  Tensor weight_;
  std::shared_ptr<QuantCache> cache_ = std::make_shared<QuantCache>();
  quant::LinearKind kind_ = quant::LinearKind::kRoutedExpert;
  quant::Format format_ = quant::Format::kReference;
  std::uint64_t id_ = 0;
};

Tensor normal_tensor(Shape shape, Rng& rng, double stddev, bool requires_grad = true);

}  // namespace nf
