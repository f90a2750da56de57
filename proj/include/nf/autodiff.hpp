// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <initializer_list>
#include <unordered_set>
#include <vector>

#include "nf/tensor.hpp"

namespace nf {

// Dynamically recorded reverse-mode tape.
//
// Operations append a node when a tape is active on the calling thread
// (see TapeScope) and at least one input requires gradients. Nodes are
// appended in execution order, which is a topological order of the graph.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
  bool produced(const Tensor& t) const { return produced_.count(t.id()) != 0; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear();

 private:
  std::vector<Node> nodes_;
  std::unordered_set<const TensorImpl*> produced_;
};

// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Disables recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Seeds d(loss)/d(loss) = 1 and runs every node's backward rule in reverse
// tape order. Gradients accumulate into existing buffers; zeroing parameter
// gradients between steps is the caller's job.
void backward(Tape& tape, const Tensor& loss);

namespace autodiff {

// True when an active tape exists and some input requires gradients.
bool should_record(std::initializer_list<const Tensor*> inputs);

// Marks `output` as requiring gradients and appends a node to the active tape.
// Call only after should_record() returned true.
void record(std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward);

// Adds `delta` into t's gradient buffer, allocating it if needed. No-op when
// t does not require gradients.
void accumulate(const Tensor& t, std::span<const float> delta);

}  // namespace autodiff

}  // namespace nf
