// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/inference/speculative.hpp"

#include <algorithm>
#include <string>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/inference/generate.hpp"
#include "nf/ops.hpp"

namespace nf {

namespace {

std::vector<double> ratio(const std::vector<std::size_t>& num,
                          const std::vector<std::size_t>& den) {
  std::vector<double> out(num.size(), 0.0);
  for (std::size_t j = 0; j < num.size(); ++j) {
    if (den[j] > 0) out[j] = static_cast<double>(num[j]) / static_cast<double>(den[j]);
  }
  return out;
}

Tensor row(const Tensor& x, std::size_t r) {
  const std::size_t idx[1] = {r};
  return gather_rows(x, idx);
}

}  // namespace

void AcceptanceStats::merge(const AcceptanceStats& other) {
  rounds += other.rounds;
  emitted += other.emitted;
  const std::size_t n = std::max(proposed.size(), other.proposed.size());
  proposed.resize(n, 0);
  accepted.resize(n, 0);
  for (std::size_t j = 0; j < other.proposed.size(); ++j) {
    proposed[j] += other.proposed[j];
    accepted[j] += other.accepted[j];
  }
}

std::vector<double> AcceptanceStats::marginal() const { return ratio(accepted, proposed); }

std::vector<double> AcceptanceStats::conditional() const {
  std::vector<std::size_t> reached(accepted.size(), 0);
  for (std::size_t j = 0; j < accepted.size(); ++j) {
    reached[j] = j == 0 ? proposed[0] : std::min(accepted[j - 1], proposed[j]);
  }
  return ratio(accepted, reached);
}

double AcceptanceStats::tokens_per_round() const {
  return rounds == 0 ? 0.0 : static_cast<double>(emitted) / static_cast<double>(rounds);
}

std::vector<TokenId> propose_drafts(const Model& model, const Tensor& hidden, TokenId first,
                                    std::size_t k) {
  NoGradScope off;
  std::vector<TokenId> drafts;
  TokenId prev = first;
  for (std::size_t depth = 1; depth <= k; ++depth) {
    const TokenId shifted[1] = {prev};
    prev = static_cast<TokenId>(argmax(model.mtp_logits(depth, hidden, shifted).data()));
    drafts.push_back(prev);
  }
  return drafts;
}

std::size_t accepted_prefix(std::span<const TokenId> drafts, const Tensor& verify_logits) {
  const std::size_t v = verify_logits.dim(1);
  const auto data = verify_logits.data();
  std::size_t a = 0;
  while (a < drafts.size() && a < verify_logits.dim(0) &&
         static_cast<TokenId>(argmax(data.subspan(a * v, v))) == drafts[a]) {
    ++a;
  }
  return a;
}

SpeculativeResult speculative_generate(const Model& model, std::span<const TokenId> prompt,
                                       std::size_t k, std::size_t max_new) {
  if (k == 0 || k > model.config().mtp_depth) {
    throw ConfigError("draft length " + std::to_string(k) + " needs 1 <= k <= MTP depth " +
                      std::to_string(model.config().mtp_depth));
  }
  NoGradScope off;
  const TokenId eos = model.config().tokens.eos;
  GenerationState s = prefill(model, prompt);
  SpeculativeResult result;
  AcceptanceStats& stats = result.stats;
  stats.proposed.assign(k, 0);
  stats.accepted.assign(k, 0);

  while (s.emitted.size() < max_new) {
    const TokenId first = greedy_next(model, s);
    ++stats.rounds;
    ++stats.emitted;
    if (first == eos) {
      s.emitted.push_back(first);
      break;
    }
    const std::size_t room = max_new - s.emitted.size() - 1;
    const std::size_t depth = std::min(k, room);
    DraftBatch batch{propose_drafts(model, s.last_hidden, first, depth), 0};

    std::vector<TokenId> fed = {first};
    fed.insert(fed.end(), batch.drafts.begin(), batch.drafts.end());
    DecodeState saved = s.decode;
    Tensor hidden = model.extend(fed, s.decode, kDecodeContext).hidden;
    batch.accepted = accepted_prefix(batch.drafts, model.head_logits(hidden));

    // An accepted end-of-sequence draft ends generation.
    std::size_t keep = batch.accepted;
    bool stop = false;
    for (std::size_t j = 0; j < batch.accepted; ++j) {
      if (batch.drafts[j] == eos) {
        keep = j + 1;
        stop = true;
        break;
      }
    }
    for (std::size_t j = 0; j < depth; ++j) {
      ++stats.proposed[j];
      if (j < batch.accepted) ++stats.accepted[j];
    }
    stats.emitted += keep;
    s.emitted.insert(s.emitted.end(), fed.begin(), fed.begin() + 1 + keep);
    if (stop) break;
    if (keep == depth) {
      s.last_hidden = row(hidden, depth);
    } else {
      // Roll back the rejected drafts: recurrent state cannot be truncated.
      s.decode = std::move(saved);
      hidden = model.extend(std::span(fed).first(1 + keep), s.decode, kDecodeContext).hidden;
      s.last_hidden = row(hidden, keep);
    }
  }
  result.tokens = std::move(s.emitted);
  return result;
}

AcceptanceStats measure_acceptance(const Model& model,
                                   const std::vector<std::vector<TokenId>>& prompts,
                                   std::size_t k, std::size_t max_new) {
  AcceptanceStats total;
  if (k == 0) return total;
  for (const auto& prompt : prompts) {
    total.merge(speculative_generate(model, prompt, k, max_new).stats);
  }
  return total;
}

}  // namespace nf
