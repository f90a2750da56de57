// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nf/layers/linear.hpp"

namespace nf {

struct AttentionConfig {
  std::size_t d_model = 64;
  std::size_t q_heads = 4;
  std::size_t kv_heads = 2;
  std::size_t head_dim = 16;

  std::size_t kv_width() const { return kv_heads * head_dim; }
  void validate() const;
};

// Keys and values of every processed position, [length × kv_heads·head_dim]
// each, stored row-major in float32.
struct KvCache {
  std::size_t kv_width = 0;
  std::vector<float> k, v;

  std::size_t length() const { return kv_width == 0 ? 0 : k.size() / kv_width; }
  std::size_t bytes() const { return (k.size() + v.size()) * sizeof(float); }
};

// Bytes held by a KV cache after `tokens` positions: keys and values for
// every KV head, float32.
std::size_t kv_cache_bytes(const AttentionConfig& config, std::size_t tokens);

// Causal grouped-query attention. q[T×Hq·D]; k_new, v_new [T×Hkv·D] are the
// positions that follow `past_len` cached rows in past_k / past_v. Query t
// attends to every cached row and to new rows 0..t. Query head h reads KV
// head h / (Hq/Hkv). Scale 1/√D; no positional terms. Gradients flow into
// q, k_new and v_new only.
Tensor attention_core(const Tensor& q, const Tensor& k_new, const Tensor& v_new,
                      std::span<const float> past_k, std::span<const float> past_v,
                      std::size_t q_heads, std::size_t kv_heads, std::size_t head_dim);

class AttentionLayer {
 public:
  AttentionLayer() = default;
  AttentionLayer(const AttentionConfig& config, Rng& rng, double init_std);

  KvCache empty_cache() const;
  // Full sequence with an empty cache. x[T×d] → [T×d].
  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  // Attends over `cache` plus x and appends x's keys and values to it.
  Tensor extend(const Tensor& x, KvCache& cache, const ForwardContext& ctx) const;
  Tensor step(const Tensor& x, KvCache& cache, const ForwardContext& ctx) const;

  const AttentionConfig& config() const { return config_; }
  Linear& qkv() { return qkv_; }
  Linear& out_proj() { return out_proj_; }
  const Linear& qkv() const { return qkv_; }
  const Linear& out_proj() const { return out_proj_; }
  void append_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  AttentionConfig config_;
  Linear qkv_, out_proj_;
};

}  // namespace nf
