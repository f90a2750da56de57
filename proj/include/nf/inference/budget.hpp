// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "nf/model/model.hpp"

namespace nf {

inline constexpr std::size_t kUnlimitedThinking = std::numeric_limits<std::size_t>::max();

struct BudgetConfig {
  std::size_t max_think = kUnlimitedThinking;  // tokens strictly inside the think span
  TokenId think_open = 2;
  TokenId think_close = 3;

  // Reads the marker ids from the model's special tokens.
  static BudgetConfig for_model(const Model& model, std::size_t max_think);
};

// Indices into BudgetResult::tokens. `close` equals tokens.size() when
// generation stopped inside the span.
struct ThinkSpan {
  std::size_t open = 0;
  std::size_t close = 0;
  bool forced = false;
  bool from_prompt = false;  // opened by the prompt; `open` is 0
};

struct BudgetResult {
  std::vector<TokenId> tokens;
  std::vector<ThinkSpan> spans;
  std::size_t think_tokens = 0;
  std::size_t forced_closes = 0;
};

// Greedy decoding with a cap on thinking tokens. Once the budget is spent
// inside a think span, the think-close token replaces the model's choice and
// is fed back as the next input. A prompt whose last marker is think-open
// starts generation inside a span marked `from_prompt`.
// Throws ConfigError for marker ids outside the vocabulary or equal to each
// other.
BudgetResult generate_with_budget(const Model& model, std::span<const TokenId> prompt,
                                  const BudgetConfig& budget, std::size_t max_new);

}  // namespace nf
