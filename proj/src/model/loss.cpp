// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/model/loss.hpp"

#include "nf/error.hpp"
#include "nf/ops.hpp"

namespace nf {

namespace {

Tensor leading_rows(const Tensor& x, std::size_t rows) {
  if (rows == x.dim(0)) return x;
  std::vector<std::size_t> idx(rows);
  for (std::size_t i = 0; i < rows; ++i) idx[i] = i;
  return gather_rows(x, idx);
}

}  // namespace

LossBreakdown compute_loss(const ModelOutput& out, std::span<const TokenId> tokens,
                           double mtp_lambda) {
  const std::size_t steps = tokens.size();
  if (steps < 2) throw ContractError("compute_loss needs at least 2 tokens");
  LossBreakdown r;
  Tensor main = cross_entropy(leading_rows(out.main_logits, steps - 1), tokens.subspan(1));
  r.main_ce = main.item();
  r.total = main;
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < out.mtp_logits.size(); ++i) {
    const std::size_t depth = i + 1, rows = out.mtp_logits[i].dim(0);
    if (rows == 0) continue;
    Tensor ce = cross_entropy(out.mtp_logits[i], tokens.subspan(1 + depth, rows));
    r.mtp_ce.push_back(ce.item());
    terms.push_back(ce);
  }
  if (!terms.empty()) {
    Tensor acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    r.total = add(main, scale(acc, static_cast<float>(mtp_lambda / double(terms.size()))));
  }
  r.objective = out.aux_loss.defined() ? add(r.total, out.aux_loss) : r.total;
  r.aux = out.aux_loss.defined() ? out.aux_loss.item() : 0.0;
  return r;
}

}  // namespace nf
