// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "nf/kv_config.hpp"
#include "nf/quant/formats.hpp"

namespace nf::quant {

enum class LinearKind {
  kQkvProjection,
  kAttentionOutProjection,
  kMambaInProjection,
  kMambaOutProjection,
  kRoutedExpert,
  kSharedExpert,
  kRouterGate,
  kLatentDownProjection,
  kLatentUpProjection,
  kMtpHead,
  kOutputHead,
};

std::string linear_kind_name(LinearKind kind);

// `index` counts composite blocks (one Mamba, attention or MoE layer is one
// unit) out of `total_layers`.
struct LayerDescriptor {
  LinearKind kind = LinearKind::kRoutedExpert;
  std::size_t index = 0;
  std::size_t total_layers = 1;
};

struct PrecisionPolicy {
  // Format for layers no rule keeps in higher precision.
  Format low_precision = Format::kReference;
  double tail_fraction = 0.15;
  // Keep QKV and attention-output projections in reference precision and
  // Mamba output projections in MXFP8. Turning this off is the ablation
  // that quantizes them like everything else.
  bool protect_sensitive_layers = true;

  static PrecisionPolicy reference() { return {}; }
  static PrecisionPolicy low(Format f) {
    PrecisionPolicy p;
    p.low_precision = f;
    return p;
  }
  // Keys: format, tail_fraction, protect_sensitive_layers.
  static PrecisionPolicy from_config(const KeyValueConfig& cfg);
  void to_config(KeyValueConfig& cfg) const;
};

// Number of trailing layers kept in reference precision: ceil(fraction × L),
// ignoring floating-point noise in the product (0.15 × 20 counts as 3).
std::size_t high_precision_tail(std::size_t total_layers, double fraction);

// Rules, first match wins:
//   policy is reference                          → REFERENCE
//   latent down/up, MTP head, router, output head → REFERENCE
//   index among the last ceil(fraction·L) layers → REFERENCE
//   protected: QKV / attention output            → REFERENCE
//   protected: Mamba output projection           → MXFP8
//   otherwise                                    → policy.low_precision
// Throws ContractError when index >= total_layers.
Format resolve_precision(const LayerDescriptor& layer, const PrecisionPolicy& policy);

}  // namespace nf::quant
