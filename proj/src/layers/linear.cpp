// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/layers/linear.hpp"

#include <cstring>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/ops.hpp"
#include "nf/quant/qgemm.hpp"

namespace nf {

using quant::BlockLayout;
using quant::Format;
using quant::OperandQuant;
using quant::QgemmOptions;
using quant::RoundingMode;

namespace {

OperandQuant operand(Format format, BlockLayout layout, RoundingMode rounding) {
  OperandQuant q;
  q.format = format;
  q.layout = layout;
  q.rounding = rounding;
  return q;
}

}  // namespace

Tensor quantize_weight(const Tensor& w, Format format) {
  return quant::fake_quantize(w, operand(format, BlockLayout::k2d16x16, RoundingMode::nearest_even()),
                              0);
}

Tensor quantized_matmul(const Tensor& x, const Tensor& w, Format format, std::uint64_t seed) {
  if (format == Format::kReference) return matmul(x, w);
  if (w.rank() != 2) throw DimensionError("quantized_matmul expects a 2-D weight");
  return quantized_matmul(x, w, quantize_weight(w, format), format, seed);
}

Tensor quantized_matmul(const Tensor& x, const Tensor& w, const Tensor& w_quantized,
                        Format format, std::uint64_t seed) {
  if (format == Format::kReference) return matmul(x, w);
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw DimensionError("quantized_matmul: cannot multiply " + shape_str(x.shape()) + " by " +
                         shape_str(w.shape()));
  }
  if (w_quantized.shape() != w.shape()) {
    throw DimensionError("quantized_matmul: quantized weight " + shape_str(w_quantized.shape()) +
                         " does not match " + shape_str(w.shape()));
  }
  const RoundingMode nearest = RoundingMode::nearest_even();
  const OperandQuant exact = operand(Format::kReference, BlockLayout::k1d16, nearest);
  QgemmOptions fprop;
  fprop.a = operand(format, BlockLayout::k1d16, nearest);
  fprop.b = exact;
  Tensor out = quant::qgemm_sim(x, w_quantized, fprop);
  if (autodiff::should_record({&x, &w})) {
    autodiff::record({x, w}, out, [x, w, w_quantized, out, format, seed, nearest, exact]() {
      Tensor dy(out.shape(), std::vector<float>(out.grad().begin(), out.grad().end()));
      NoGradScope off;
      if (x.requires_grad()) {
        QgemmOptions dgrad;
        dgrad.a = operand(format, BlockLayout::k1d16,
                          RoundingMode::stochastic(mix_seed({seed, 1})));
        dgrad.b = exact;
        Tensor dx = quant::qgemm_sim(dy, transpose(w_quantized), dgrad);
        autodiff::accumulate(x, dx.data());
      }
      if (w.requires_grad()) {
        QgemmOptions wgrad;
        wgrad.a = operand(format, BlockLayout::k1d16, nearest);
        wgrad.b = operand(format, BlockLayout::k1d16,
                          RoundingMode::stochastic(mix_seed({seed, 2})));
        wgrad.rht = format == Format::kNvfp4;
        wgrad.rht_seed = mix_seed({seed, 3});
        Tensor dw = quant::qgemm_sim(transpose(x.detach()), dy, wgrad);
        autodiff::accumulate(w, dw.data());
      }
    });
  }
  return out;
}

Tensor normal_tensor(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  for (float& v : t.mutable_data()) v = static_cast<float>(rng.normal(0.0, stddev));
  return t;
}

Linear::Linear(std::size_t in, std::size_t out, quant::LinearKind kind, Rng& rng,
               double init_std)
    : weight_(normal_tensor({in, out}, rng, init_std)), kind_(kind) {}

Tensor Linear::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (!ctx.quantize || format_ == Format::kReference) return matmul(x, weight_);
  return quantized_matmul(x, weight_, quantized_weight(), format_, mix_seed({ctx.seed, id_}));
}

Tensor Linear::quantized_weight() const {
  std::lock_guard<std::mutex> lock(cache_->mutex);
  const auto values = weight_.data();
  if (!cache_->quantized.defined() || cache_->format != format_ ||
      cache_->source.size() != values.size() ||
      std::memcmp(values.data(), cache_->source.data(), values.size_bytes()) != 0) {
    cache_->quantized = quantize_weight(weight_.detach(), format_);
    cache_->source.assign(values.begin(), values.end());
    cache_->format = format_;
  }
  return cache_->quantized;
}

void Linear::set_weight(Tensor w) {
  if (weight_.defined() && w.shape() != weight_.shape()) {
    throw DimensionError("linear: weight " + shape_str(w.shape()) + " replaces " +
                         shape_str(weight_.shape()));
  }
  weight_ = std::move(w);
}

void Linear::append_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
}

}  // namespace nf
