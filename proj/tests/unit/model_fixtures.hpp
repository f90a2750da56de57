// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "nf/model/config.hpp"
#include "nf/model/train.hpp"
#include "nf/rng.hpp"

namespace nf::testing {

// d=16, V=32 configuration small enough for grad checks and quick training.
inline ModelConfig micro_config(const std::string& pattern = "MEA", std::size_t mtp = 0) {
  ModelConfig c;
  c.vocab_size = 32;
  c.d_model = 16;
  c.pattern = pattern;
  c.mamba.heads = 2;
  c.mamba.head_dim = 8;
  c.mamba.state_dim = 4;
  c.attention.q_heads = 4;
  c.attention.kv_heads = 2;
  c.attention.head_dim = 4;
  c.moe.num_experts = 4;
  c.moe.top_k = 2;
  c.moe.expert_dim = 12;
  c.mtp_depth = mtp;
  c.max_context = 64;
  c.init_std = 0.2;
  return c;
}

inline Sequence random_tokens(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  Sequence s(n);
  for (TokenId& t : s) t = static_cast<TokenId>(rng.uniform_int(0, std::int64_t(vocab) - 1));
  return s;
}

}  // namespace nf::testing
