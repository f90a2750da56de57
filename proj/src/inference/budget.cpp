// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/inference/budget.hpp"

#include "nf/error.hpp"
#include "nf/inference/generate.hpp"

namespace nf {

BudgetConfig BudgetConfig::for_model(const Model& model, std::size_t max_think) {
  const SpecialTokens& t = model.config().tokens;
  return BudgetConfig{max_think, t.think_open, t.think_close};
}

BudgetResult generate_with_budget(const Model& model, std::span<const TokenId> prompt,
                                  const BudgetConfig& budget, std::size_t max_new) {
  const auto vocab = static_cast<TokenId>(model.config().vocab_size);
  auto valid = [&](TokenId id) { return id >= 0 && id < vocab; };
  if (!valid(budget.think_open) || !valid(budget.think_close) ||
      budget.think_open == budget.think_close) {
    throw ConfigError("budget markers must be distinct ids inside the vocabulary");
  }
  const TokenId eos = model.config().tokens.eos;

  GenerationState s = prefill(model, prompt);
  for (auto it = prompt.rbegin(); it != prompt.rend(); ++it) {
    if (*it == budget.think_close) break;
    if (*it == budget.think_open) {
      s.in_think = true;
      break;
    }
  }

  BudgetResult result;
  auto open_span = [&](std::size_t at) { result.spans.push_back(ThinkSpan{at, at}); };
  if (s.in_think) result.spans.push_back(ThinkSpan{0, 0, false, true});
  while (s.emitted.size() < max_new) {
    TokenId next = greedy_next(model, s);
    const std::size_t at = s.emitted.size();
    if (s.in_think) {
      if (next != budget.think_close && s.think_tokens >= budget.max_think) {
        next = budget.think_close;
        ++result.forced_closes;
        result.spans.back().forced = true;
      }
      if (next == budget.think_close) {
        s.in_think = false;
        result.spans.back().close = at;
      } else {
        ++s.think_tokens;
      }
    } else if (next == budget.think_open) {
      s.in_think = true;
      open_span(at);
    }
    if (next == eos) {
      s.emitted.push_back(next);
      break;
    }
    advance(model, s, next);
  }
  if (s.in_think) result.spans.back().close = s.emitted.size();
  result.think_tokens = s.think_tokens;
  result.tokens = std::move(s.emitted);
  return result;
}

}  // namespace nf
