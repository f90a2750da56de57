// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/quant/qgemm.hpp"

#include "nf/error.hpp"
#include "nf/ops.hpp"
#include "nf/quant/hadamard.hpp"
#include "nf/quant/mxfp8.hpp"

namespace nf::quant {

namespace {

Tensor transposed(const Tensor& t) {
  Tensor out({t.dim(1), t.dim(0)});
  kernels::transpose(t.data().data(), out.mutable_data().data(), t.dim(0), t.dim(1));
  return out;
}

Tensor fake_quantize_rows(const Tensor& t, const OperandQuant& q) {
  switch (q.format) {
    case Format::kReference:
      return t.detach();
    case Format::kNvfp4:
      return dequantize_nvfp4(quantize_nvfp4(t, q.layout, q.rounding));
    case Format::kMxfp8:
      return dequantize_mxfp8(quantize_mxfp8(t, q.rounding));
  }
  throw ContractError("fake_quantize: unknown format");
}

// Zero-pads columns (axis 1) or rows (axis 0) up to `len`.
Tensor pad_axis(const Tensor& t, std::size_t axis, std::size_t len) {
  const std::size_t r = t.dim(0), c = t.dim(1);
  if ((axis == 1 ? c : r) == len) return t;
  Tensor out(axis == 1 ? Shape{r, len} : Shape{len, c});
  auto o = out.mutable_data();
  const std::size_t oc = out.dim(1);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) o[i * oc + j] = t[i * c + j];
  }
  return out;
}

}  // namespace

Tensor fake_quantize(const Tensor& t, const OperandQuant& q, std::size_t axis) {
  if (t.rank() != 2) throw DimensionError("fake_quantize expects a 2-D tensor");
  if (axis == 1) return fake_quantize_rows(t, q);
  if (axis != 0) throw DimensionError("fake_quantize: axis must be 0 or 1");
  if (q.format == Format::kReference) return t.detach();
  return transposed(fake_quantize_rows(transposed(t), q));
}

Tensor qgemm_sim(const Tensor& a, const Tensor& b, const QgemmOptions& options) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("qgemm_sim: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  Tensor qa = a, qb = b;
  if (options.rht) {
    const std::size_t n = options.rht_block;
    const std::size_t k = (a.dim(1) + n - 1) / n * n;
    const HadamardTransform transform = random_hadamard(n, options.rht_seed);
    qa = apply_rht(pad_axis(a, 1, k), transform, 1);
    qb = apply_rht(pad_axis(b, 0, k), transform, 0);
  }
  qa = fake_quantize(qa, options.a, 1);
  qb = fake_quantize(qb, options.b, 0);
  const std::size_t m = qa.dim(0), k = qa.dim(1), n = qb.dim(1);
  Tensor out({m, n});
  kernels::gemm(qa.data().data(), qb.data().data(), out.mutable_data().data(), m, k, n);
  return out;
}

double flush_to_zero_rate(const Tensor& t, Format format, BlockLayout layout) {
  std::size_t nonzero = 0, flushed = 0;
  const std::size_t rows = t.rows(), cols = t.cols();
  if (format == Format::kNvfp4) {
    const QuantizedNvfp4 q = quantize_nvfp4(t, layout);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (t[r * cols + c] == 0.0f) continue;
        ++nonzero;
        if ((q.codes[r * q.padded_cols + c] & 0x7) == 0) ++flushed;
      }
    }
  } else if (format == Format::kMxfp8) {
    const QuantizedMxfp8 q = quantize_mxfp8(t);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (t[r * cols + c] == 0.0f) continue;
        ++nonzero;
        if ((q.codes[r * q.padded_cols + c] & 0x7F) == 0) ++flushed;
      }
    }
  } else {
    for (float v : t.data()) nonzero += v != 0.0f;
  }
  if (nonzero == 0) throw UndefinedRateError("flush_to_zero_rate: tensor has no nonzero element");
  return double(flushed) / double(nonzero);
}

}  // namespace nf::quant
