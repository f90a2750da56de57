// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nf/model/model.hpp"

namespace nf {

// Decoding runs every linear layer in reference precision, so incremental
// and full-sequence evaluation agree bit for bit.
inline constexpr ForwardContext kDecodeContext{false, 0};

// Index of the largest value; ties go to the lower index.
std::size_t argmax(std::span<const float> values);

// Per-sequence decoding state.
struct GenerationState {
  DecodeState decode;
  Tensor last_hidden;  // [1×d] trunk state after the most recent token
  std::vector<TokenId> emitted;
  bool in_think = false;
  std::size_t think_tokens = 0;
};

// Runs the prompt through the model. Throws ContractError for an empty
// prompt.
GenerationState prefill(const Model& model, std::span<const TokenId> prompt);

// Greedy next token from the current state.
TokenId greedy_next(const Model& model, const GenerationState& state);

// Feeds one token and records it as emitted.
void advance(const Model& model, GenerationState& state, TokenId token);

// Argmax decoding with carried state. Stops after max_new tokens or after
// emitting the end-of-sequence token, which is included.
std::vector<TokenId> generate_greedy(const Model& model, std::span<const TokenId> prompt,
                                     std::size_t max_new);

}  // namespace nf
