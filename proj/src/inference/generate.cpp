// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/inference/generate.hpp"

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/ops.hpp"

namespace nf {

namespace {

Tensor last_row(const Tensor& x) {
  const std::vector<std::size_t> idx = {x.dim(0) - 1};
  return gather_rows(x, idx);
}

}  // namespace

std::size_t argmax(std::span<const float> values) {
  if (values.empty()) throw ContractError("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

GenerationState prefill(const Model& model, std::span<const TokenId> prompt) {
  if (prompt.empty()) throw ContractError("generation needs a non-empty prompt");
  NoGradScope off;
  GenerationState s;
  s.decode = model.new_decode_state();
  s.last_hidden = last_row(model.extend(prompt, s.decode, kDecodeContext).hidden);
  return s;
}

TokenId greedy_next(const Model& model, const GenerationState& state) {
  NoGradScope off;
  return static_cast<TokenId>(argmax(model.head_logits(state.last_hidden).data()));
}

void advance(const Model& model, GenerationState& state, TokenId token) {
  NoGradScope off;
  const TokenId one[1] = {token};
  state.last_hidden = model.extend(one, state.decode, kDecodeContext).hidden;
  state.emitted.push_back(token);
}

std::vector<TokenId> generate_greedy(const Model& model, std::span<const TokenId> prompt,
                                     std::size_t max_new) {
  GenerationState s = prefill(model, prompt);
  while (s.emitted.size() < max_new) {
    const TokenId next = greedy_next(model, s);
    if (next == model.config().tokens.eos) {
      s.emitted.push_back(next);
      break;
    }
    advance(model, s, next);
  }
  return s.emitted;
}

}  // namespace nf
