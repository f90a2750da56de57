// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "nf/model/loss.hpp"
#include "nf/model/model.hpp"
#include "nf/model/optimizer.hpp"

namespace nf {

using Sequence = std::vector<TokenId>;

struct StepMetrics {
  double loss = 0.0;     // objective averaged over the batch
  double main_ce = 0.0;
  std::vector<double> mtp_ce;
  double aux = 0.0;
  double grad_norm = 0.0;  // before clipping
  double lr = 0.0;
};

// Forward and backward over every sequence of the batch on one tape, then
// one optimizer update. `seed` feeds the stochastic-rounding streams of
// quantized layers. Throws DivergenceError for non-finite activations, loss or
// gradient, and ContractError for a sequence longer than max_context.
StepMetrics train_step(const Model& model, AdamW& optimizer, const std::vector<Sequence>& batch,
                       std::uint64_t seed);

struct EvalMetrics {
  double main_ce = 0.0;  // token-weighted mean
  std::vector<double> mtp_ce;
};

// Loss without gradients, averaged over sequences of at least 2 tokens.
EvalMetrics evaluate(const Model& model, const std::vector<Sequence>& sequences,
                     const ForwardContext& ctx);

}  // namespace nf
