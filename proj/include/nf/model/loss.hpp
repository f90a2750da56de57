// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "nf/model/model.hpp"

namespace nf {

struct LossBreakdown {
  // main_ce + λ · mean_k(mtp_ce[k]); the mean is skipped without MTP heads.
  Tensor total;
  // total + MoE load-balancing loss; what training minimizes.
  Tensor objective;
  double main_ce = 0.0;
  std::vector<double> mtp_ce;
  double aux = 0.0;
};

// Main logits row t is scored against token t+1 and MTP depth k row t
// against token t+1+k. Throws ContractError for fewer than 2 tokens.
LossBreakdown compute_loss(const ModelOutput& out, std::span<const TokenId> tokens,
                           double mtp_lambda);

}  // namespace nf
