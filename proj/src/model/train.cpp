// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/model/train.hpp"

#include <cmath>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/ops.hpp"
#include "nf/rng.hpp"

namespace nf {

StepMetrics train_step(const Model& model, AdamW& optimizer, const std::vector<Sequence>& batch,
                       std::uint64_t seed) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  const std::size_t step = optimizer.steps_taken();
  StepMetrics m;
  m.lr = optimizer.current_lr();
  Tape tape;
  Tensor objective;
  {
    TapeScope scope(tape);
    const float inv = 1.0f / static_cast<float>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Sequence& seq = batch[b];
      const ForwardContext ctx{true, mix_seed({seed, b})};
      if (seq.size() > model.config().max_context) {
        throw ContractError("train_step: sequence of " + std::to_string(seq.size()) +
                            " tokens exceeds max_context " +
                            std::to_string(model.config().max_context));
      }
      LossBreakdown loss;
      try {
        loss = compute_loss(model.forward(seq, ctx), seq, model.config().mtp_lambda);
      } catch (const NumericInputError& e) {
        // Non-finite activations mean the parameters have already diverged.
        throw DivergenceError("non-finite activations at step " + std::to_string(step) + ": " +
                                  e.what(),
                              step);
      }
      Tensor term = scale(loss.objective, inv);
      objective = objective.defined() ? add(objective, term) : term;
      m.main_ce += loss.main_ce / double(batch.size());
      m.aux += loss.aux / double(batch.size());
      if (m.mtp_ce.size() < loss.mtp_ce.size()) m.mtp_ce.resize(loss.mtp_ce.size(), 0.0);
      for (std::size_t k = 0; k < loss.mtp_ce.size(); ++k) {
        m.mtp_ce[k] += loss.mtp_ce[k] / double(batch.size());
      }
    }
  }
  m.loss = objective.item();
  if (!std::isfinite(m.loss)) {
    throw DivergenceError("non-finite loss at step " + std::to_string(step), step);
  }
  backward(tape, objective);
  m.grad_norm = optimizer.grad_norm();
  if (!std::isfinite(m.grad_norm)) {
    optimizer.zero_grad();
    throw DivergenceError("non-finite gradient at step " + std::to_string(step), step);
  }
  optimizer.step();
  return m;
}

EvalMetrics evaluate(const Model& model, const std::vector<Sequence>& sequences,
                     const ForwardContext& ctx) {
  NoGradScope off;
  EvalMetrics e;
  double tokens = 0.0;
  std::vector<double> mtp_tokens;
  for (const Sequence& seq : sequences) {
    if (seq.size() < 2) continue;
    ModelOutput out = model.forward(seq, ctx);
    LossBreakdown loss = compute_loss(out, seq, model.config().mtp_lambda);
    const double n = double(seq.size() - 1);
    e.main_ce += loss.main_ce * n;
    tokens += n;
    if (e.mtp_ce.size() < loss.mtp_ce.size()) {
      e.mtp_ce.resize(loss.mtp_ce.size(), 0.0);
      mtp_tokens.resize(loss.mtp_ce.size(), 0.0);
    }
    for (std::size_t k = 0; k < loss.mtp_ce.size(); ++k) {
      const double rows = double(out.mtp_logits[k].dim(0));
      e.mtp_ce[k] += loss.mtp_ce[k] * rows;
      mtp_tokens[k] += rows;
    }
  }
  if (tokens > 0) e.main_ce /= tokens;
  for (std::size_t k = 0; k < e.mtp_ce.size(); ++k) {
    if (mtp_tokens[k] > 0) e.mtp_ce[k] /= mtp_tokens[k];
  }
  return e;
}

}  // namespace nf
