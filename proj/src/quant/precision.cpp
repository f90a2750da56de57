// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/quant/precision.hpp"

#include <algorithm>
#include <cmath>

#include "nf/error.hpp"

namespace nf::quant {

std::string linear_kind_name(LinearKind kind) {
  switch (kind) {
    case LinearKind::kQkvProjection:
      return "qkv_projection";
    case LinearKind::kAttentionOutProjection:
      return "attention_out_projection";
    case LinearKind::kMambaInProjection:
      return "mamba_in_projection";
    case LinearKind::kMambaOutProjection:
      return "mamba_out_projection";
    case LinearKind::kRoutedExpert:
      return "routed_expert";
    case LinearKind::kSharedExpert:
      return "shared_expert";
    case LinearKind::kRouterGate:
      return "router_gate";
    case LinearKind::kLatentDownProjection:
      return "latent_down_projection";
    case LinearKind::kLatentUpProjection:
      return "latent_up_projection";
    case LinearKind::kMtpHead:
      return "mtp_head";
    case LinearKind::kOutputHead:
      return "output_head";
  }
  return "unknown";
}

PrecisionPolicy PrecisionPolicy::from_config(const KeyValueConfig& cfg) {
  PrecisionPolicy p;
  p.low_precision = parse_format(cfg.get_string("format", "reference"));
  p.tail_fraction = cfg.get_double("tail_fraction", p.tail_fraction);
  p.protect_sensitive_layers =
      cfg.get_bool("protect_sensitive_layers", p.protect_sensitive_layers);
  if (p.tail_fraction < 0.0 || p.tail_fraction > 1.0) {
    throw ConfigError("precision tail_fraction must lie in [0, 1]");
  }
  return p;
}

void PrecisionPolicy::to_config(KeyValueConfig& cfg) const {
  cfg.set("format", format_name(low_precision));
  cfg.set("tail_fraction", format_double(tail_fraction));
  cfg.set("protect_sensitive_layers", protect_sensitive_layers ? "true" : "false");
}

std::size_t high_precision_tail(std::size_t total_layers, double fraction) {
  const double raw = fraction * double(total_layers);
  const double n = std::ceil(raw - 1e-9 * std::max(1.0, raw));
  return std::min<std::size_t>(total_layers, static_cast<std::size_t>(std::max(0.0, n)));
}

Format resolve_precision(const LayerDescriptor& layer, const PrecisionPolicy& policy) {
  if (layer.index >= layer.total_layers) {
    throw ContractError("resolve_precision: layer index " + std::to_string(layer.index) +
                        " out of range for " + std::to_string(layer.total_layers) +
                        " layers");
  }
  if (policy.low_precision == Format::kReference) return Format::kReference;
  switch (layer.kind) {
    case LinearKind::kLatentDownProjection:
    case LinearKind::kLatentUpProjection:
    case LinearKind::kMtpHead:
    case LinearKind::kRouterGate:
    case LinearKind::kOutputHead:
      return Format::kReference;
    default:
      break;
  }
  const std::size_t tail = high_precision_tail(layer.total_layers, policy.tail_fraction);
  if (layer.index >= layer.total_layers - tail) return Format::kReference;
  if (policy.protect_sensitive_layers) {
    if (layer.kind == LinearKind::kQkvProjection ||
        layer.kind == LinearKind::kAttentionOutProjection) {
      return Format::kReference;
    }
    if (layer.kind == LinearKind::kMambaOutProjection) return Format::kMxfp8;
  }
  return policy.low_precision;
}

}  // namespace nf::quant
