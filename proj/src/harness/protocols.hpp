// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <vector>

#include "nf/harness/experiment.hpp"

namespace nf::detail {

// Shared state handed to each experiment protocol.
struct RunContext {
  const ExperimentSpec& spec;
  ExperimentResult& result;
  std::vector<Sequence> train;
  std::vector<Sequence> eval;
  std::ostringstream report;

  MetricsLog& log() { return result.metrics; }
  void fail(const std::string& why) {
    if (result.ok) result.failure = why;
    result.ok = false;
  }
};

void run_train(RunContext& ctx);
void run_compare_moe(RunContext& ctx);
void run_compare_precision(RunContext& ctx);
void run_spec_bench(RunContext& ctx);
void run_budget_sweep(RunContext& ctx);
void run_niah(RunContext& ctx);
void run_nll_curve(RunContext& ctx);

}  // namespace nf::detail
