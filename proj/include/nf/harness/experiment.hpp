// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nf/harness/corpus.hpp"
#include "nf/harness/metrics.hpp"
#include "nf/inference/probes.hpp"
#include "nf/kv_config.hpp"
#include "nf/model/config.hpp"
#include "nf/model/model.hpp"
#include "nf/model/optimizer.hpp"

namespace nf {

enum class ExperimentKind {
  kTrain,
  kCompareMoe,
  kComparePrecision,
  kSpecBench,
  kBudgetSweep,
  kNiah,
  kNllCurve,
};

std::string experiment_kind_name(ExperimentKind kind);
// Throws ConfigError for an unknown name.
ExperimentKind parse_experiment_kind(const std::string& name);

struct TrainOptions {
  std::size_t steps = 200;
  std::size_t batch_size = 4;
  std::size_t log_every = 10;
  std::size_t eval_every = 0;   // 0: evaluate once, after the last step
  std::size_t eval_count = 32;  // held-out sequences
  AdamWConfig optimizer;
};

// Everything a run depends on. Config keys:
//   experiment.{kind, name, seed, out, model_config}
//   train.{steps, batch_size, log_every, eval_every, eval_count}
//   optim.*   model.* mamba.* attention.* moe.* mtp.* precision.* tokens.*
//   data.*    (training corpus; held-out sequences follow its last index)
//   compare.{latent_dim, loss_threshold}
//   spec.{draft_len, prompt_len, max_new, prompts, chance_trials}
//   budget.values      comma-separated, "inf" for no budget
//   niah.{lengths, needles, depths, trials}
//   nll.sequences
// `experiment.model_config` names a file whose entries fill in keys the
// experiment file leaves unset.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kTrain;
  std::string name = "run";
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  ModelConfig model;
  CorpusSpec data;
  TrainOptions train;

  std::size_t latent_dim = 0;  // 0: d_model / 4
  double loss_threshold = 1.0;

  std::size_t draft_len = 1;
  std::size_t prompt_len = 8;
  std::size_t max_new = 32;
  std::size_t prompts = 32;
  // Untrained models, each seeded independently and given one random prompt
  // for a single round, so the draft trials compared against chance are
  // independent.
  std::size_t chance_trials = 1000;

  std::vector<std::size_t> budgets = {0, 1, 2, 4, 8, 16, static_cast<std::size_t>(-1)};

  std::vector<std::size_t> niah_lengths;  // empty: data.seq_len and twice that
  std::size_t niah_needles = 1;
  std::vector<double> niah_depths = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t niah_trials = 32;

  std::size_t nll_sequences = 200;

  // Throws ConfigError for a missing experiment.seed or invalid values.
  static ExperimentSpec from_config(const KeyValueConfig& cfg,
                                    const std::filesystem::path& base_dir = {});
  // Canonical form; from_config(to_config()) reproduces the spec.
  KeyValueConfig to_config() const;
};

struct ExperimentResult {
  bool ok = true;
  std::string failure;  // set when a run diverged
  MetricsLog metrics;
  std::string report;   // markdown summary
};

// Runs the protocol for spec.kind. When out_dir is non-empty, writes
// config.txt (resolved spec), metrics.csv, metrics.jsonl and report.md there,
// including partial metrics after a divergence.
ExperimentResult run_experiment(const ExperimentSpec& spec);

// Training loop shared by every experiment.
struct TrainOutcome {
  bool diverged = false;
  std::string message;
  std::size_t steps_done = 0;
  double final_loss = 0.0;  // mean main CE over the last tenth of the steps
};

// Trains on batches drawn from `train` with an Rng seeded per step. Logs
// train.{loss, main_ce, mtp_ce, grad_norm, lr} every log_every steps and
// eval.{main_ce, answer_acc} on `eval` at each evaluation point under `run`.
TrainOutcome train_model(Model& model, const CorpusSpec& data, const std::vector<Sequence>& train,
                         const std::vector<Sequence>& eval, const TrainOptions& options,
                         std::uint64_t seed, const std::string& run, MetricsLog& log);

// Teacher-forced exact-match accuracy at the task's answer positions
// (NaN-free: 0 when there are none).
double answer_accuracy(const Model& model, const CorpusSpec& data,
                       const std::vector<Sequence>& sequences);

// Held-out corpus spec: `count` sequences of the same distribution, indexed
// after the training corpus.
CorpusSpec heldout_spec(const CorpusSpec& data, std::size_t count);

// Latent arm of compare-moe: N and K scaled by d/ℓ, expert width chosen so
// the model's active parameter count is as close as possible to `standard`.
// ℓ = d returns the standard config unchanged.
ModelConfig matched_latent_config(const ModelConfig& standard, std::size_t latent_dim);

}  // namespace nf
