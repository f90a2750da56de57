// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nf/layers/attention.hpp"
#include "nf/layers/mamba2.hpp"
#include "nf/model/config.hpp"
#include "nf/moe/moe.hpp"

namespace nf {

// One pre-norm residual block: x + layer(rms_norm(x)).
struct Block {
  LayerKind kind = LayerKind::kMamba;
  Tensor norm;  // [d]
  Mamba2Layer mamba;
  AttentionLayer attention;
  MoeLayer moe;
};

// Predicts token t+1+k from the trunk state at t and the embedding of token
// t+k:  z = proj([norm(h_t); norm(e(x_{t+k}))]);  z += ffn(norm(z));
// logits = norm(z)·Eᵀ with the shared embedding E.
struct MtpHead {
  Tensor hidden_norm, embed_norm, ffn_norm, out_norm;  // [d] each
  Linear proj;                                         // [2d×d]
  Expert ffn;                                          // d → d → d
};

// Per-sequence recurrent state for incremental decoding.
struct DecodeState {
  std::vector<MambaState> mamba;  // one per Mamba block, in stack order
  std::vector<KvCache> kv;        // one per attention block
  std::size_t position = 0;

  // Bytes held by Mamba states and KV caches.
  std::size_t bytes() const;
};

struct ModelOutput {
  Tensor main_logits;               // [T×V]; row t predicts token t+1
  std::vector<Tensor> mtp_logits;   // depth k (1-based) at index k−1: [(T−1−k)×V]
  Tensor aux_loss;                  // sum of MoE load-balancing terms
};

struct TrunkOutput {
  Tensor hidden;    // [T×d], before the final norm
  Tensor aux_loss;  // scalar
};

class Model {
 public:
  // Deterministic initialization from `seed`. Throws ConfigError for an
  // invalid config.
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const LayerPattern& pattern() const { return pattern_; }

  // Full sequence: trunk, main head and every MTP depth. Throws IndexError
  // for a token outside the vocabulary.
  ModelOutput forward(std::span<const TokenId> tokens, const ForwardContext& ctx) const;

  DecodeState new_decode_state() const;
  // Runs tokens through the trunk continuing from `state`, advancing it.
  TrunkOutput extend(std::span<const TokenId> tokens, DecodeState& state,
                     const ForwardContext& ctx) const;
  // Final norm and tied output head: hidden[R×d] → [R×V].
  Tensor head_logits(const Tensor& hidden) const;
  // MTP depth k (1-based) on trunk states hidden[R×d] and the tokens x_{t+k}
  // paired with each row.
  Tensor mtp_logits(std::size_t depth, const Tensor& hidden,
                    std::span<const TokenId> shifted) const;

  ParameterList parameters() const;
  std::size_t parameter_count() const;
  // Parameters used per token: routed experts count K of N.
  std::size_t active_parameter_count() const;

  // Every linear layer with the descriptor its precision was resolved from.
  std::vector<std::pair<quant::LayerDescriptor, const Linear*>> linears() const;

  const Tensor& embedding() const { return embedding_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::vector<Block>& blocks() { return blocks_; }
  const std::vector<MtpHead>& mtp_heads() const { return mtp_; }

  // Re-resolves every linear layer's format under `policy`.
  void apply_precision(const quant::PrecisionPolicy& policy);

 private:
  ModelConfig config_;
  LayerPattern pattern_;
  Tensor embedding_;  // [V×d], also the output head
  std::vector<Block> blocks_;
  Tensor final_norm_;
  std::vector<MtpHead> mtp_;
};

}  // namespace nf
