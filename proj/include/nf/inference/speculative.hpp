// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nf/model/model.hpp"

namespace nf {

// Acceptance counts over verification rounds. Draft position j (1-based) is
// stored at index j−1. Counts merge by addition.
struct AcceptanceStats {
  std::size_t rounds = 0;
  std::size_t emitted = 0;             // tokens produced by all rounds
  std::vector<std::size_t> proposed;   // rounds that drafted position j
  std::vector<std::size_t> accepted;   // rounds that accepted position j

  void merge(const AcceptanceStats& other);
  // accepted[j] / proposed[j]: fraction of drafting rounds that accepted j.
  std::vector<double> marginal() const;
  // accepted[j] / accepted[j−1] (rounds for j = 1): acceptance given that
  // every earlier draft was accepted.
  std::vector<double> conditional() const;
  double tokens_per_round() const;
};

// Drafts proposed in one round and the accepted prefix length.
struct DraftBatch {
  std::vector<TokenId> drafts;
  std::size_t accepted = 0;
};

struct SpeculativeResult {
  std::vector<TokenId> tokens;
  AcceptanceStats stats;
};

// Greedy decoding with MTP drafts. Each round takes the trunk's greedy token,
// chains k drafts through MTP depths 1..k, verifies them with one trunk pass
// and keeps the longest prefix equal to the trunk's own greedy choices. The
// output is token-identical to generate_greedy. Throws ConfigError when
// k = 0 or k exceeds the model's MTP depth.
SpeculativeResult speculative_generate(const Model& model, std::span<const TokenId> prompt,
                                       std::size_t k, std::size_t max_new);

// Proposes k chained drafts from trunk state hidden[1×d] after `first`, the
// trunk's greedy token for that state.
std::vector<TokenId> propose_drafts(const Model& model, const Tensor& hidden, TokenId first,
                                    std::size_t k);

// Accepted prefix length: drafts[j] is accepted while it equals the greedy
// token of verify_logits row j and every earlier draft was accepted.
std::size_t accepted_prefix(std::span<const TokenId> drafts, const Tensor& verify_logits);

// Runs speculative decoding over every prompt and merges the statistics.
// k = 0 gives an empty report.
AcceptanceStats measure_acceptance(const Model& model,
                                   const std::vector<std::vector<TokenId>>& prompts,
                                   std::size_t k, std::size_t max_new);

}  // namespace nf
