// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/harness/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/inference/budget.hpp"
#include "nf/model/train.hpp"
#include "nf/rng.hpp"
#include "protocols.hpp"

namespace nf {

namespace {

constexpr ExperimentKind kAllKinds[] = {
    ExperimentKind::kTrain,       ExperimentKind::kCompareMoe,  ExperimentKind::kComparePrecision,
    ExperimentKind::kSpecBench,   ExperimentKind::kBudgetSweep, ExperimentKind::kNiah,
    ExperimentKind::kNllCurve,
};

std::size_t get_size(const KeyValueConfig& cfg, const std::string& key, std::size_t fallback) {
  const std::int64_t v = cfg.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find(',', begin);
    if (end == std::string::npos) end = text.size();
    std::string item = text.substr(begin, end - begin);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
    begin = end + 1;
  }
  return out;
}

std::size_t parse_size_item(const std::string& key, const std::string& item) {
  if (item == "inf") return kUnlimitedThinking;
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(item, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != item.size() || item.front() == '-') {
    throw ConfigError("config key '" + key + "': bad list entry '" + item + "'");
  }
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> get_size_list(const KeyValueConfig& cfg, const std::string& key,
                                       std::vector<std::size_t> fallback) {
  if (!cfg.contains(key)) return fallback;
  std::vector<std::size_t> out;
  for (const auto& item : split_list(cfg.get_string(key))) out.push_back(parse_size_item(key, item));
  return out;
}

std::vector<double> get_double_list(const KeyValueConfig& cfg, const std::string& key,
                                    std::vector<double> fallback) {
  if (!cfg.contains(key)) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(cfg.get_string(key))) {
    KeyValueConfig one;
    one.set("v", item);
    try {
      out.push_back(one.get_double("v"));
    } catch (const Error&) {
      throw ConfigError("config key '" + key + "': bad list entry '" + item + "'");
    }
  }
  return out;
}

std::string size_list_text(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t v : values) {
    if (!out.empty()) out += ",";
    out += v == kUnlimitedThinking ? "inf" : std::to_string(v);
  }
  return out;
}

std::string double_list_text(const std::vector<double>& values) {
  std::string out;
  for (double v : values) {
    if (!out.empty()) out += ",";
    out += format_double(v);
  }
  return out;
}

}  // namespace

std::string experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kTrain:
      return "train";
    case ExperimentKind::kCompareMoe:
      return "compare-moe";
    case ExperimentKind::kComparePrecision:
      return "compare-precision";
    case ExperimentKind::kSpecBench:
      return "spec-bench";
    case ExperimentKind::kBudgetSweep:
      return "budget-sweep";
    case ExperimentKind::kNiah:
      return "niah";
    case ExperimentKind::kNllCurve:
      return "nll-curve";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (ExperimentKind k : kAllKinds) {
    if (experiment_kind_name(k) == name) return k;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

ExperimentSpec ExperimentSpec::from_config(const KeyValueConfig& given,
                                           const std::filesystem::path& base_dir) {
  KeyValueConfig cfg = given;
  if (cfg.contains("experiment.model_config")) {
    std::filesystem::path path = cfg.get_string("experiment.model_config");
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    const KeyValueConfig base = KeyValueConfig::load(path);
    for (const auto& [k, v] : base.entries()) {
      if (!cfg.contains(k)) cfg.set(k, v);
    }
  }
  if (!cfg.contains("experiment.seed")) throw ConfigError("experiment.seed is required");

  ExperimentSpec s;
  const KeyValueConfig e = cfg.section("experiment");
  s.kind = parse_experiment_kind(e.get_string("kind", experiment_kind_name(s.kind)));
  s.name = e.get_string("name", s.name);
  s.seed = static_cast<std::uint64_t>(e.get_int("seed"));
  s.out_dir = e.get_string("out", "");
  s.model = ModelConfig::from_config(cfg);

  KeyValueConfig data = cfg.section("data");
  if (!data.contains("seed")) data.set("seed", std::to_string(s.seed));
  if (!data.contains("vocab_size")) data.set("vocab_size", std::to_string(s.model.vocab_size));
  s.data = CorpusSpec::from_config(data);

  const KeyValueConfig t = cfg.section("train");
  s.train.steps = get_size(t, "steps", s.train.steps);
  s.train.batch_size = get_size(t, "batch_size", s.train.batch_size);
  s.train.log_every = get_size(t, "log_every", s.train.log_every);
  s.train.eval_every = get_size(t, "eval_every", s.train.eval_every);
  s.train.eval_count = get_size(t, "eval_count", s.train.eval_count);
  s.train.optimizer = AdamWConfig::from_config(cfg.section("optim"));

  const KeyValueConfig c = cfg.section("compare");
  s.latent_dim = get_size(c, "latent_dim", s.latent_dim);
  s.loss_threshold = c.get_double("loss_threshold", s.loss_threshold);

  const KeyValueConfig sp = cfg.section("spec");
  s.draft_len = get_size(sp, "draft_len", s.draft_len);
  s.prompt_len = get_size(sp, "prompt_len", s.prompt_len);
  s.max_new = get_size(sp, "max_new", s.max_new);
  s.prompts = get_size(sp, "prompts", s.prompts);
  s.chance_trials = get_size(sp, "chance_trials", s.chance_trials);

  s.budgets = get_size_list(cfg, "budget.values", s.budgets);

  const KeyValueConfig n = cfg.section("niah");
  s.niah_lengths = get_size_list(n, "lengths", s.niah_lengths);
  s.niah_needles = get_size(n, "needles", s.niah_needles);
  s.niah_depths = get_double_list(n, "depths", s.niah_depths);
  s.niah_trials = get_size(n, "trials", s.niah_trials);

  s.nll_sequences = get_size(cfg.section("nll"), "sequences", s.nll_sequences);

  if (s.data.vocab_size != s.model.vocab_size) {
    throw ConfigError("data.vocab_size " + std::to_string(s.data.vocab_size) +
                      " differs from model.vocab_size " + std::to_string(s.model.vocab_size));
  }
  if (s.data.seq_len > s.model.max_context) {
    throw ConfigError("data.seq_len " + std::to_string(s.data.seq_len) +
                      " exceeds model.max_context " + std::to_string(s.model.max_context));
  }
  if (s.train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (s.train.log_every == 0) throw ConfigError("train.log_every must be positive");
  s.data.validate();
  return s;
}

KeyValueConfig ExperimentSpec::to_config() const {
  KeyValueConfig cfg = model.to_config();
  cfg.set("experiment.kind", experiment_kind_name(kind));
  cfg.set("experiment.name", name);
  cfg.set("experiment.seed", std::to_string(seed));
  if (!out_dir.empty()) cfg.set("experiment.out", out_dir.string());
  data.to_config(cfg, "data");
  cfg.set("train.steps", std::to_string(train.steps));
  cfg.set("train.batch_size", std::to_string(train.batch_size));
  cfg.set("train.log_every", std::to_string(train.log_every));
  cfg.set("train.eval_every", std::to_string(train.eval_every));
  cfg.set("train.eval_count", std::to_string(train.eval_count));
  KeyValueConfig optim;
  train.optimizer.to_config(optim);
  for (const auto& [k, v] : optim.entries()) cfg.set("optim." + k, v);
  cfg.set("compare.latent_dim", std::to_string(latent_dim));
  cfg.set("compare.loss_threshold", format_double(loss_threshold));
  cfg.set("spec.draft_len", std::to_string(draft_len));
  cfg.set("spec.prompt_len", std::to_string(prompt_len));
  cfg.set("spec.max_new", std::to_string(max_new));
  cfg.set("spec.prompts", std::to_string(prompts));
  cfg.set("spec.chance_trials", std::to_string(chance_trials));
  cfg.set("budget.values", size_list_text(budgets));
  if (!niah_lengths.empty()) cfg.set("niah.lengths", size_list_text(niah_lengths));
  cfg.set("niah.needles", std::to_string(niah_needles));
  cfg.set("niah.depths", double_list_text(niah_depths));
  cfg.set("niah.trials", std::to_string(niah_trials));
  cfg.set("nll.sequences", std::to_string(nll_sequences));
  return cfg;
}

CorpusSpec heldout_spec(const CorpusSpec& data, std::size_t count) {
  CorpusSpec h = data;
  h.first_index = data.first_index + data.count;
  h.count = count;
  return h;
}

double answer_accuracy(const Model& model, const CorpusSpec& data,
                       const std::vector<Sequence>& sequences) {
  NoGradScope off;
  const ForwardContext ctx{true, 0};
  std::size_t total = 0, correct = 0;
  for (const Sequence& seq : sequences) {
    const auto positions = answer_positions(data, seq);
    if (positions.empty()) continue;
    Tensor logits = model.forward(seq, ctx).main_logits;
    const std::size_t v = logits.dim(1);
    for (std::size_t p : positions) {
      const auto row = logits.data().subspan((p - 1) * v, v);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      ++total;
      if (static_cast<TokenId>(best) == seq[p]) ++correct;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

TrainOutcome train_model(Model& model, const CorpusSpec& data, const std::vector<Sequence>& train,
                         const std::vector<Sequence>& eval, const TrainOptions& options,
                         std::uint64_t seed, const std::string& run, MetricsLog& log) {
  if (train.empty()) throw ContractError("train_model: empty training corpus");
  TrainOutcome out;
  AdamW opt(model.parameters(), options.optimizer);
  const std::size_t tail = std::max<std::size_t>(1, options.steps / 10);
  double tail_sum = 0.0;
  std::size_t tail_n = 0;
  auto run_eval = [&](std::size_t step) {
    if (eval.empty()) return;
    const EvalMetrics m = evaluate(model, eval, ForwardContext{true, 0});
    log.add(run, step, "eval.main_ce", m.main_ce);
    log.add(run, step, "eval.answer_acc", answer_accuracy(model, data, eval));
  };
  for (std::size_t step = 0; step < options.steps; ++step) {
    Rng rng(mix_seed({seed, 0xba7c4, step}));
    std::vector<Sequence> batch;
    for (std::size_t b = 0; b < options.batch_size; ++b) {
      batch.push_back(train[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(train.size()) - 1))]);
    }
    StepMetrics m;
    try {
      m = train_step(model, opt, batch, mix_seed({seed, step}));
    } catch (const DivergenceError& e) {
      out.diverged = true;
      out.message = e.what();
      log.add(run, step, "diverged", 1.0, {{"reason", "non-finite"}});
      return out;
    } catch (const NumericInputError& e) {
      // Non-finite activations reached an op that rejects them.
      out.diverged = true;
      out.message = e.what();
      log.add(run, step, "diverged", 1.0, {{"reason", "non-finite activations"}});
      return out;
    }
    out.steps_done = step + 1;
    if (step + tail >= options.steps) {
      tail_sum += m.main_ce;
      ++tail_n;
    }
    const bool last = step + 1 == options.steps;
    if (step % options.log_every == 0 || last) {
      log.add(run, step, "train.loss", m.loss);
      log.add(run, step, "train.main_ce", m.main_ce);
      for (std::size_t k = 0; k < m.mtp_ce.size(); ++k) {
        log.add(run, step, "train.mtp_ce", m.mtp_ce[k], {{"depth", std::to_string(k + 1)}});
      }
      log.add(run, step, "train.grad_norm", m.grad_norm);
      log.add(run, step, "train.lr", m.lr);
    }
    if ((options.eval_every > 0 && (step + 1) % options.eval_every == 0 && !last)) {
      run_eval(step);
    }
  }
  out.final_loss = tail_n == 0 ? 0.0 : tail_sum / static_cast<double>(tail_n);
  if (options.steps > 0) {
    log.add(run, options.steps - 1, "train.final_main_ce", out.final_loss);
    run_eval(options.steps - 1);
  }
  return out;
}

ModelConfig matched_latent_config(const ModelConfig& standard, std::size_t latent_dim) {
  ModelConfig c = standard;
  c.moe.latent_dim = 0;
  if (latent_dim == standard.d_model) return c;
  const StandardMoeShape shape{standard.d_model, standard.moe.num_experts, standard.moe.top_k,
                               standard.moe.expert_dim};
  const LatentMoeShape latent = derive_latent_config(shape, latent_dim);
  c.moe.latent_dim = latent_dim;
  c.moe.num_experts = latent.num_experts;
  c.moe.top_k = latent.top_k;
  const auto target = static_cast<double>(Model(standard, 0).active_parameter_count());
  auto active = [&](std::size_t m) {
    ModelConfig probe = c;
    probe.moe.expert_dim = m;
    return static_cast<double>(Model(probe, 0).active_parameter_count());
  };
  const double a0 = active(standard.moe.expert_dim);
  const double slope = active(standard.moe.expert_dim + 1) - a0;
  const double m = static_cast<double>(standard.moe.expert_dim) + (target - a0) / slope;
  c.moe.expert_dim = static_cast<std::size_t>(std::max(1.0, std::round(m)));
  return c;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  ExperimentResult result;
  detail::RunContext ctx{spec, result, generate_corpus(spec.data),
                         generate_corpus(heldout_spec(spec.data, spec.train.eval_count)), {}};
  ctx.report << "# " << spec.name << " (" << experiment_kind_name(spec.kind) << ")\n\n";
  switch (spec.kind) {
    case ExperimentKind::kTrain:
      detail::run_train(ctx);
      break;
    case ExperimentKind::kCompareMoe:
      detail::run_compare_moe(ctx);
      break;
    case ExperimentKind::kComparePrecision:
      detail::run_compare_precision(ctx);
      break;
    case ExperimentKind::kSpecBench:
      detail::run_spec_bench(ctx);
      break;
    case ExperimentKind::kBudgetSweep:
      detail::run_budget_sweep(ctx);
      break;
    case ExperimentKind::kNiah:
      detail::run_niah(ctx);
      break;
    case ExperimentKind::kNllCurve:
      detail::run_nll_curve(ctx);
      break;
  }
  if (!result.ok) ctx.report << "\n**Failed:** " << result.failure << "\n";
  result.report = ctx.report.str();
  if (!spec.out_dir.empty()) {
    std::filesystem::create_directories(spec.out_dir);
    spec.to_config().save(spec.out_dir / "config.txt");
    result.metrics.write(spec.out_dir);
    write_text_file(spec.out_dir / "report.md", result.report);
  }
  return result;
}

}  // namespace nf
