// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/autodiff.hpp"

#include "nf/error.hpp"

namespace nf {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  produced_.insert(output.id());
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::clear() {
  nodes_.clear();
  produced_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(Tape& tape, const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!tape.produced(loss)) {
    throw ContractError("backward(): loss was not produced on this tape");
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0f;
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not reachable from the loss
    it->backward();
  }
}

namespace autodiff {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record(std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward) {
  output.set_requires_grad(true);
  g_active_tape->record(std::move(inputs), output, std::move(backward));
}

void accumulate(const Tensor& t, std::span<const float> delta) {
  if (!t.requires_grad()) return;
  TensorImpl& impl = t.impl();
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0f);
  if (delta.size() != impl.grad.size()) {
    throw DimensionError("gradient size mismatch for tensor " + shape_str(impl.shape));
  }
  for (std::size_t i = 0; i < delta.size(); ++i) impl.grad[i] += delta[i];
}

}  // namespace autodiff

}  // namespace nf
