// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "nf/model/model.hpp"

namespace nf {

// Per-token negative log-likelihood (nats) of tokens 1..T−1 of each sequence
// under the main head: out[s][i] scores sequences[s][i + 1].
std::vector<std::vector<double>> token_nll(const Model& model,
                                           const std::vector<std::vector<TokenId>>& sequences);

struct NllCurve {
  std::vector<double> per_position;  // mean over sequences at each target index
  std::vector<double> cumulative;    // prefix mean of per_position
};

// Cumulative average NLL by position. Throws ContractError unless all
// sequences share one length greater than 1.
NllCurve nll_by_position(const Model& model, const std::vector<std::vector<TokenId>>& sequences);
// Same aggregation over precomputed per-token values.
NllCurve nll_curve_from(const std::vector<std::vector<double>>& nll);

// Vocabulary layout shared by key-value retrieval data and NIAH probes:
// special tokens, then values, then keys, then filler up to the vocab size.
struct KvVocab {
  TokenId value_begin = 4;
  std::size_t value_count = 16;
  TokenId key_begin = 20;
  std::size_t key_count = 16;
  TokenId filler_begin = 36;
  std::size_t filler_count = 28;

  // Throws ConfigError when the vocabulary cannot hold the reserved ranges
  // and at least one filler token.
  static KvVocab for_vocab(std::size_t vocab_size, std::size_t value_count = 16,
                           std::size_t key_count = 16);
  bool is_key(TokenId t) const;
  bool is_value(TokenId t) const;
};

struct NiahConfig {
  std::size_t context_len = 128;  // prompt length including the query key
  std::size_t num_needles = 1;    // key→value pairs in the haystack
  std::vector<double> depths = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t trials = 32;        // prompts per depth
  std::uint64_t seed = 0;
  std::size_t value_count = 16;
  std::size_t key_count = 16;
};

struct NiahPrompt {
  std::vector<TokenId> tokens;  // ends with the queried key
  TokenId answer = 0;
  std::size_t needle_position = 0;  // index of the queried key's first occurrence
};

// Filler haystack with `num_needles` distinct key→value pairs. The queried
// needle sits at fractional depth `depth` of the space before the query.
// Throws ConfigError when the context cannot hold the needles.
NiahPrompt make_niah_prompt(const KvVocab& vocab, std::size_t context_len,
                            std::size_t num_needles, double depth, std::uint64_t seed);

struct NiahBucket {
  double depth = 0.0;
  std::size_t trials = 0;
  std::size_t correct = 0;
  double accuracy() const;
};

struct NiahReport {
  bool empty = false;  // no needles: nothing was measured
  double chance = 0.0;
  std::vector<NiahBucket> buckets;
  std::size_t trials() const;
  std::size_t correct() const;
  double accuracy() const;
};

// Exact-match retrieval: the prediction after the query key is the argmax of
// the main head restricted to the value range.
NiahReport niah_eval(const Model& model, const NiahConfig& config);

}  // namespace nf
