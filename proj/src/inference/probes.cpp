// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/inference/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/inference/generate.hpp"
#include "nf/ops.hpp"
#include "nf/rng.hpp"

namespace nf {

namespace {

// -log softmax(row)[target] in double precision.
double row_nll(std::span<const float> row, TokenId target) {
  double mx = row[0];
  for (float v : row) mx = std::max(mx, static_cast<double>(v));
  double z = 0.0;
  for (float v : row) z += std::exp(static_cast<double>(v) - mx);
  return std::log(z) + mx - static_cast<double>(row[static_cast<std::size_t>(target)]);
}

}  // namespace

std::vector<std::vector<double>> token_nll(const Model& model,
                                           const std::vector<std::vector<TokenId>>& sequences) {
  NoGradScope off;
  std::vector<std::vector<double>> out;
  out.reserve(sequences.size());
  for (const auto& seq : sequences) {
    if (seq.size() < 2) throw ContractError("NLL needs sequences of at least 2 tokens");
    DecodeState state = model.new_decode_state();
    Tensor logits = model.head_logits(model.extend(seq, state, kDecodeContext).hidden);
    const std::size_t v = logits.dim(1);
    std::vector<double> nll(seq.size() - 1);
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      nll[i] = row_nll(logits.data().subspan(i * v, v), seq[i + 1]);
    }
    out.push_back(std::move(nll));
  }
  return out;
}

NllCurve nll_curve_from(const std::vector<std::vector<double>>& nll) {
  if (nll.empty() || nll.front().empty()) throw ContractError("NLL curve needs token scores");
  const std::size_t n = nll.front().size();
  NllCurve curve;
  curve.per_position.assign(n, 0.0);
  for (const auto& seq : nll) {
    if (seq.size() != n) throw ContractError("NLL curve needs sequences of equal length");
    for (std::size_t i = 0; i < n; ++i) curve.per_position[i] += seq[i];
  }
  double running = 0.0;
  curve.cumulative.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    curve.per_position[i] /= static_cast<double>(nll.size());
    running += curve.per_position[i];
    curve.cumulative[i] = running / static_cast<double>(i + 1);
  }
  return curve;
}

NllCurve nll_by_position(const Model& model, const std::vector<std::vector<TokenId>>& sequences) {
  if (sequences.empty()) throw ContractError("NLL curve needs at least one sequence");
  for (const auto& seq : sequences) {
    if (seq.size() != sequences.front().size()) {
      throw ContractError("NLL curve needs sequences of equal length");
    }
  }
  return nll_curve_from(token_nll(model, sequences));
}

KvVocab KvVocab::for_vocab(std::size_t vocab_size, std::size_t value_count,
                           std::size_t key_count) {
  constexpr std::size_t kSpecial = 4;
  if (value_count == 0 || key_count == 0 || vocab_size < kSpecial + value_count + key_count + 1) {
    throw ConfigError("vocab " + std::to_string(vocab_size) + " cannot hold " +
                      std::to_string(value_count) + " values, " + std::to_string(key_count) +
                      " keys and filler");
  }
  KvVocab v;
  v.value_begin = static_cast<TokenId>(kSpecial);
  v.value_count = value_count;
  v.key_begin = static_cast<TokenId>(kSpecial + value_count);
  v.key_count = key_count;
  v.filler_begin = static_cast<TokenId>(kSpecial + value_count + key_count);
  v.filler_count = vocab_size - kSpecial - value_count - key_count;
  return v;
}

bool KvVocab::is_key(TokenId t) const {
  return t >= key_begin && t < key_begin + static_cast<TokenId>(key_count);
}

bool KvVocab::is_value(TokenId t) const {
  return t >= value_begin && t < value_begin + static_cast<TokenId>(value_count);
}

NiahPrompt make_niah_prompt(const KvVocab& vocab, std::size_t context_len,
                            std::size_t num_needles, double depth, std::uint64_t seed) {
  if (num_needles == 0 || num_needles > vocab.key_count || context_len < 2 * num_needles + 1) {
    throw ConfigError("context of " + std::to_string(context_len) + " cannot hold " +
                      std::to_string(num_needles) + " needles");
  }
  if (!(depth >= 0.0 && depth <= 1.0)) throw ConfigError("needle depth must be in [0, 1]");
  Rng rng(seed);
  NiahPrompt p;
  p.tokens.resize(context_len);
  for (auto& t : p.tokens) {
    t = vocab.filler_begin +
        static_cast<TokenId>(rng.uniform_int(0, static_cast<std::int64_t>(vocab.filler_count) - 1));
  }
  std::vector<TokenId> keys(vocab.key_count);
  std::iota(keys.begin(), keys.end(), vocab.key_begin);
  std::shuffle(keys.begin(), keys.end(), rng.engine());

  // Pair slots start in [0, context_len − 3]; the last token is the query.
  const std::size_t last_start = context_len - 3;
  std::vector<bool> used(context_len, false);
  auto place = [&](std::size_t at, TokenId key) {
    const auto value = vocab.value_begin + static_cast<TokenId>(rng.uniform_int(
                                               0, static_cast<std::int64_t>(vocab.value_count) - 1));
    p.tokens[at] = key;
    p.tokens[at + 1] = value;
    used[at] = used[at + 1] = true;
    return value;
  };
  p.needle_position =
      static_cast<std::size_t>(std::lround(depth * static_cast<double>(last_start)));
  p.answer = place(p.needle_position, keys[0]);
  for (std::size_t n = 1; n < num_needles; ++n) {
    std::vector<std::size_t> free;
    for (std::size_t at = 0; at <= last_start; ++at) {
      if (!used[at] && !used[at + 1]) free.push_back(at);
    }
    if (free.empty()) throw ConfigError("no room for needle " + std::to_string(n));
    const auto pick = free[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(free.size()) - 1))];
    place(pick, keys[n]);
  }
  p.tokens.back() = keys[0];
  return p;
}

double NiahBucket::accuracy() const {
  return trials == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(trials);
}

std::size_t NiahReport::trials() const {
  std::size_t n = 0;
  for (const auto& b : buckets) n += b.trials;
  return n;
}

std::size_t NiahReport::correct() const {
  std::size_t n = 0;
  for (const auto& b : buckets) n += b.correct;
  return n;
}

double NiahReport::accuracy() const {
  const std::size_t n = trials();
  return n == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(n);
}

NiahReport niah_eval(const Model& model, const NiahConfig& config) {
  const KvVocab vocab =
      KvVocab::for_vocab(model.config().vocab_size, config.value_count, config.key_count);
  NiahReport report;
  report.chance = 1.0 / static_cast<double>(vocab.value_count);
  if (config.num_needles == 0) {
    report.empty = true;
    return report;
  }
  NoGradScope off;
  for (std::size_t d = 0; d < config.depths.size(); ++d) {
    NiahBucket bucket{config.depths[d], 0, 0};
    for (std::size_t trial = 0; trial < config.trials; ++trial) {
      const NiahPrompt p = make_niah_prompt(vocab, config.context_len, config.num_needles,
                                            config.depths[d], mix_seed({config.seed, d, trial}));
      DecodeState state = model.new_decode_state();
      Tensor hidden = model.extend(p.tokens, state, kDecodeContext).hidden;
      const std::size_t last[1] = {hidden.dim(0) - 1};
      Tensor logits = model.head_logits(gather_rows(hidden, last));
      const auto values = logits.data().subspan(static_cast<std::size_t>(vocab.value_begin),
                                                vocab.value_count);
      const auto guess = vocab.value_begin + static_cast<TokenId>(argmax(values));
      ++bucket.trials;
      if (guess == p.answer) ++bucket.correct;
    }
    report.buckets.push_back(bucket);
  }
  return report;
}

}  // namespace nf
