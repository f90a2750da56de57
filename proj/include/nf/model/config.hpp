// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "nf/kv_config.hpp"
#include "nf/layers/attention.hpp"
#include "nf/layers/mamba2.hpp"
#include "nf/moe/moe.hpp"
#include "nf/ops.hpp"
#include "nf/quant/precision.hpp"

namespace nf {

enum class LayerKind { kMamba, kMoe, kAttention };

char layer_letter(LayerKind kind);

// Layer stack over the letters M (Mamba-2), E (MoE) and A (attention).
struct LayerPattern {
  std::vector<LayerKind> layers;
  std::size_t mamba = 0;
  std::size_t moe = 0;
  std::size_t attention = 0;

  std::size_t size() const { return layers.size(); }
  double attention_fraction() const;
  // More than a quarter of the layers are attention; allowed but unusual.
  bool attention_heavy() const { return attention_fraction() > 0.25; }
  std::string str() const;
};

// Throws ParseError at the first illegal character, or at 0 for an empty
// pattern.
LayerPattern parse_layer_pattern(std::string_view s);

struct SpecialTokens {
  TokenId pad = 0;
  TokenId eos = 1;
  TokenId think_open = 2;
  TokenId think_close = 3;
};

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 64;
  std::string pattern = "MEMEAME";
  Mamba2Config mamba;
  AttentionConfig attention;
  MoeConfig moe;
  std::size_t mtp_depth = 0;
  double mtp_lambda = 0.3;
  quant::PrecisionPolicy precision;
  std::size_t max_context = 256;
  SpecialTokens tokens;
  double init_std = 0.02;
  float norm_eps = 1e-5f;

  // Sub-layer configs with d_model filled in from this config.
  Mamba2Config mamba_config() const;
  AttentionConfig attention_config() const;
  MoeConfig moe_config() const;

  // Throws ConfigError listing every violation found.
  void validate() const;

  // Sections: model, mamba, attention, moe, mtp, precision, tokens.
  static ModelConfig from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
};

}  // namespace nf
