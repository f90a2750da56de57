// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <memory>

#include "nf/error.hpp"
#include "nf/inference/budget.hpp"
#include "nf/inference/generate.hpp"
#include "nf/inference/probes.hpp"
#include "nf/inference/speculative.hpp"
#include "nf/model/checkpoint.hpp"
#include "nf/rng.hpp"
#include "protocols.hpp"

namespace nf::detail {

namespace {

// Ids below this are pad, eos and the think markers.
constexpr std::int64_t kFirstOrdinaryToken = 4;

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string budget_label(std::size_t b) {
  return b == kUnlimitedThinking ? "inf" : std::to_string(b);
}

// Trains one arm; a divergence marks the experiment failed.
bool train_arm(RunContext& ctx, Model& model, const std::string& run, TrainOutcome* outcome) {
  TrainOutcome o = train_model(model, ctx.spec.data, ctx.train, ctx.eval, ctx.spec.train,
                               ctx.spec.seed, run, ctx.log());
  if (outcome != nullptr) *outcome = o;
  if (o.diverged) {
    ctx.fail("run '" + run + "' diverged after " + std::to_string(o.steps_done) +
             " steps: " + o.message);
    return false;
  }
  return true;
}

void require_task(const RunContext& ctx, TaskKind task) {
  if (ctx.spec.data.task != task) {
    throw ConfigError(experiment_kind_name(ctx.spec.kind) + " needs data.task = " +
                      task_name(task) + ", got " + task_name(ctx.spec.data.task));
  }
}

// Normal-approximation z score of `hits` successes in `n` trials against
// success probability p.
double z_score(double hits, double n, double p) {
  return n == 0 ? 0.0 : (hits / n - p) / std::sqrt(p * (1.0 - p) / n);
}

}  // namespace

void run_train(RunContext& ctx) {
  Model model(ctx.spec.model, ctx.spec.seed);
  TrainOutcome o;
  const bool ok = train_arm(ctx, model, "main", &o);
  ctx.report << "| steps | final train CE | eval CE | eval answer acc |\n|---|---|---|---|\n";
  ctx.report << "| " << o.steps_done << " | " << fixed(o.final_loss) << " | ";
  if (ok) {
    ctx.report << fixed(ctx.log().last("main", "eval.main_ce")) << " | "
               << fixed(ctx.log().last("main", "eval.answer_acc")) << " |\n";
    if (!ctx.spec.out_dir.empty()) {
      std::filesystem::create_directories(ctx.spec.out_dir);
      save_checkpoint(model, ctx.spec.out_dir / "model.nfrg");
    }
  } else {
    ctx.report << "- | - |\n";
  }
}

void run_compare_moe(RunContext& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  ModelConfig standard = spec.model;
  standard.moe.latent_dim = 0;
  const std::size_t latent_dim = spec.latent_dim == 0 ? standard.d_model / 4 : spec.latent_dim;
  const ModelConfig latent = matched_latent_config(standard, latent_dim);

  struct Arm {
    std::string name;
    ModelConfig config;
    std::size_t total = 0, active = 0;
    TrainOutcome outcome;
  };
  std::vector<Arm> arms = {{"standard", standard, 0, 0, {}}, {"latent", latent, 0, 0, {}}};
  for (Arm& arm : arms) {
    Model model(arm.config, spec.seed);
    arm.total = model.parameter_count();
    arm.active = model.active_parameter_count();
    const MoeCostReport cost = cost_report(arm.config.moe_config());
    ctx.log().add(arm.name, 0, "params.total", static_cast<double>(arm.total));
    ctx.log().add(arm.name, 0, "params.active", static_cast<double>(arm.active));
    ctx.log().add(arm.name, 0, "moe.a2a_elements_per_token",
                  static_cast<double>(cost.all_to_all_elements_per_token));
    ctx.log().add(arm.name, 0, "moe.nonlinear_budget", static_cast<double>(cost.nonlinear_budget));
    if (!train_arm(ctx, model, arm.name, &arm.outcome)) return;
    ctx.log().add(arm.name, spec.train.steps, "below_threshold",
                  arm.outcome.final_loss < spec.loss_threshold ? 1.0 : 0.0);
  }
  const double rel = std::abs(static_cast<double>(arms[1].active) -
                              static_cast<double>(arms[0].active)) /
                     static_cast<double>(arms[0].active);
  ctx.log().add("summary", 0, "active_param_rel_diff", rel);

  ctx.report << "Latent dimension " << latent_dim << " (d = " << standard.d_model
             << "), loss threshold " << fixed(spec.loss_threshold, 3) << ".\n\n";
  ctx.report << "| arm | N | K | expert dim | total params | active params | final train CE | "
                "eval CE | eval answer acc |\n|---|---|---|---|---|---|---|---|---|\n";
  for (const Arm& arm : arms) {
    ctx.report << "| " << arm.name << " | " << arm.config.moe.num_experts << " | "
               << arm.config.moe.top_k << " | " << arm.config.moe.expert_dim << " | " << arm.total
               << " | " << arm.active << " | " << fixed(arm.outcome.final_loss) << " | "
               << fixed(ctx.log().last(arm.name, "eval.main_ce")) << " | "
               << fixed(ctx.log().last(arm.name, "eval.answer_acc")) << " |\n";
  }
  ctx.report << "\nActive parameter difference: " << fixed(100.0 * rel, 2) << "%.\n";
}

void run_compare_precision(RunContext& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  // The low-precision arms use precision.format as given; with the reference
  // format all three arms coincide and every gap is zero.
  quant::PrecisionPolicy recommended = spec.model.precision;
  recommended.protect_sensitive_layers = true;
  quant::PrecisionPolicy unprotected = recommended;
  unprotected.protect_sensitive_layers = false;
  const std::vector<std::pair<std::string, quant::PrecisionPolicy>> arms = {
      {"reference", quant::PrecisionPolicy::reference()},
      {"recommended", recommended},
      {"unprotected", unprotected},
  };
  for (const auto& [name, policy] : arms) {
    ModelConfig c = spec.model;
    c.precision = policy;
    Model model(c, spec.seed);
    if (!train_arm(ctx, model, name, nullptr)) return;
  }

  // Relative train-loss gap against the reference arm at each logged step.
  std::map<std::string, std::map<std::size_t, double>> ce;
  for (const MetricsRow& r : ctx.log().rows()) {
    if (r.metric == "train.main_ce") ce[r.run][r.step] = r.value;
  }
  const auto& ref = ce["reference"];
  std::map<std::string, double> final_gap;
  const std::size_t window_start = spec.train.steps - spec.train.steps / 4;
  for (const std::string arm : {"recommended", "unprotected"}) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [step, loss] : ce[arm]) {
      const double gap = (loss - ref.at(step)) / ref.at(step);
      ctx.log().add("gap", step, "rel_train_gap", gap, {{"arm", arm}});
      if (step >= window_start) {
        sum += gap;
        ++n;
      }
    }
    final_gap[arm] = n == 0 ? 0.0 : sum / static_cast<double>(n);
    ctx.log().add("summary", spec.train.steps, "mean_final_rel_gap", final_gap[arm],
                  {{"arm", arm}});
    const double ref_eval = ctx.log().last("reference", "eval.main_ce");
    ctx.log().add("summary", spec.train.steps, "rel_eval_gap",
                  (ctx.log().last(arm, "eval.main_ce") - ref_eval) / ref_eval, {{"arm", arm}});
  }
  const bool ordered = final_gap["unprotected"] >= final_gap["recommended"];
  ctx.log().add("summary", spec.train.steps, "unprotected_gap_ge_recommended",
                ordered ? 1.0 : 0.0);

  ctx.report << "| arm | final train CE | eval CE | mean relative train gap (last quarter) |\n"
                "|---|---|---|---|\n";
  for (const auto& [name, policy] : arms) {
    ctx.report << "| " << name << " | " << fixed(ctx.log().last(name, "train.final_main_ce"))
               << " | " << fixed(ctx.log().last(name, "eval.main_ce")) << " | "
               << (name == "reference" ? std::string("0") : fixed(100.0 * final_gap[name], 3) + "%")
               << " |\n";
  }
  ctx.report << "\nUnprotected gap >= recommended gap: " << (ordered ? "yes" : "no") << ".\n";
}

void run_spec_bench(RunContext& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  std::vector<Sequence> prompts;
  for (std::size_t i = 0; i < spec.prompts; ++i) {
    const Sequence& s = ctx.train[i % ctx.train.size()];
    prompts.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(
                                                    std::min(spec.prompt_len, s.size())));
  }
  const double chance = 1.0 / static_cast<double>(spec.model.vocab_size);

  // Draft acceptance of untrained models on uniform prompts over the
  // non-reserved tokens, one model and one round per trial.
  const auto vocab = static_cast<std::int64_t>(spec.model.vocab_size);
  AcceptanceStats pooled;
  for (std::size_t i = 0; i < spec.chance_trials; ++i) {
    Rng rng(mix_seed({spec.seed, 0x5bec, i}));
    Sequence p(std::max<std::size_t>(spec.prompt_len, 1));
    for (TokenId& t : p) t = static_cast<TokenId>(rng.uniform_int(kFirstOrdinaryToken, vocab - 1));
    const Model fresh(spec.model, mix_seed({spec.seed, 0xf4e5, i}));
    // Two new tokens leave room for exactly one position-1 draft.
    pooled.merge(measure_acceptance(fresh, {p}, spec.draft_len, 2));
  }
  const double hits = pooled.accepted.empty() ? 0.0 : static_cast<double>(pooled.accepted[0]);
  const double trials = pooled.proposed.empty() ? 0.0 : static_cast<double>(pooled.proposed[0]);
  const double chance_rate = trials == 0 ? 0.0 : hits / trials;
  const double chance_z = z_score(hits, trials, chance);
  ctx.log().add("untrained-pool", 0, "accept.trials", trials);
  ctx.log().add("untrained-pool", 0, "accept.marginal", chance_rate, {{"position", "1"}});
  ctx.log().add("untrained-pool", 0, "accept.z_vs_chance", chance_z);

  auto record = [&](const std::string& run, const Model& model) {
    const AcceptanceStats s = measure_acceptance(model, prompts, spec.draft_len, spec.max_new);
    const auto marginal = s.marginal();
    const auto conditional = s.conditional();
    for (std::size_t j = 0; j < marginal.size(); ++j) {
      const std::map<std::string, std::string> pos = {{"position", std::to_string(j + 1)}};
      ctx.log().add(run, spec.train.steps, "accept.marginal", marginal[j], pos);
      ctx.log().add(run, spec.train.steps, "accept.conditional", conditional[j], pos);
    }
    ctx.log().add(run, spec.train.steps, "accept.rounds", static_cast<double>(s.rounds));
    ctx.log().add(run, spec.train.steps, "tokens_per_round", s.tokens_per_round());
    std::size_t lossless = 0;
    for (const Sequence& p : prompts) {
      if (speculative_generate(model, p, spec.draft_len, spec.max_new).tokens ==
          generate_greedy(model, p, spec.max_new)) {
        ++lossless;
      }
    }
    ctx.log().add(run, spec.train.steps, "lossless_fraction",
                  static_cast<double>(lossless) / static_cast<double>(prompts.size()));
    ctx.report << "| " << run << " | " << s.rounds << " | ";
    for (std::size_t j = 0; j < marginal.size(); ++j) {
      ctx.report << (j ? ", " : "") << fixed(marginal[j], 3) << " / " << fixed(conditional[j], 3);
    }
    ctx.report << " | " << fixed(s.tokens_per_round(), 3) << " | " << lossless << "/"
               << prompts.size() << " |\n";
  };
  ctx.report << "Draft length " << spec.draft_len << ", chance rate " << fixed(chance, 4)
             << ".\n\nUntrained models on random prompts: position-1 acceptance "
             << fixed(chance_rate, 4) << " over " << trials << " independent trials, z = "
             << fixed(chance_z, 2)
             << ".\n\nDecoding from training-sequence prefixes:\n\n"
                "| model | rounds | acceptance per position (marginal / conditional) | "
                "tokens per round | lossless |\n|---|---|---|---|---|\n";
  const Model untrained(spec.model, spec.seed);
  record("untrained", untrained);
  Model model(spec.model, spec.seed);
  if (!train_arm(ctx, model, "trained", nullptr)) return;
  record("trained", model);
}

void run_budget_sweep(RunContext& ctx) {
  require_task(ctx, TaskKind::kThinkAnswer);
  const ExperimentSpec& spec = ctx.spec;
  Model model(spec.model, spec.seed);
  if (!train_arm(ctx, model, "main", nullptr)) return;
  ctx.report << "| budget | accuracy | mean think tokens | forced closes |\n|---|---|---|---|\n";
  for (std::size_t b : spec.budgets) {
    std::size_t correct = 0, think = 0, forced = 0, same_as_greedy = 0;
    for (const Sequence& seq : ctx.eval) {
      const ThinkAnswerExample ex = split_think_answer(spec.data, seq);
      const std::size_t max_new = ex.steps + 3;
      const BudgetResult r =
          generate_with_budget(model, ex.prompt, BudgetConfig::for_model(model, b), max_new);
      const TokenId close = spec.model.tokens.think_close;
      const auto at = std::find(r.tokens.begin(), r.tokens.end(), close);
      if (at != r.tokens.end() && at + 1 != r.tokens.end() && *(at + 1) == ex.answer) ++correct;
      think += r.think_tokens;
      forced += r.forced_closes;
      if (b == kUnlimitedThinking && r.tokens == generate_greedy(model, ex.prompt, max_new)) {
        ++same_as_greedy;
      }
    }
    const double n = static_cast<double>(ctx.eval.size());
    const std::map<std::string, std::string> meta = {{"budget", budget_label(b)}};
    ctx.log().add("sweep", spec.train.steps, "accuracy", static_cast<double>(correct) / n, meta);
    ctx.log().add("sweep", spec.train.steps, "mean_think_tokens", static_cast<double>(think) / n,
                  meta);
    ctx.log().add("sweep", spec.train.steps, "forced_closes", static_cast<double>(forced), meta);
    if (b == kUnlimitedThinking) {
      ctx.log().add("sweep", spec.train.steps, "unlimited_matches_greedy",
                    static_cast<double>(same_as_greedy) / n);
    }
    ctx.report << "| " << budget_label(b) << " | " << fixed(static_cast<double>(correct) / n, 3)
               << " | " << fixed(static_cast<double>(think) / n, 2) << " | " << forced << " |\n";
  }
}

void run_niah(RunContext& ctx) {
  require_task(ctx, TaskKind::kLongRangeKv);
  const ExperimentSpec& spec = ctx.spec;
  std::vector<std::size_t> lengths = spec.niah_lengths;
  if (lengths.empty()) lengths = {spec.data.seq_len, 2 * spec.data.seq_len};
  const Model untrained(spec.model, spec.seed);
  Model model(spec.model, spec.seed);
  if (!train_arm(ctx, model, "main", nullptr)) return;
  ctx.report << "Trained context " << spec.data.seq_len << ", " << spec.niah_needles
             << " needle(s).\n\n| model | context | accuracy | chance | z | per depth |\n"
                "|---|---|---|---|---|---|\n";
  for (const auto& [run, m] : {std::pair<std::string, const Model*>{"untrained", &untrained},
                               std::pair<std::string, const Model*>{"trained", &model}}) {
    for (std::size_t len : lengths) {
      NiahConfig cfg;
      cfg.context_len = len;
      cfg.num_needles = spec.niah_needles;
      cfg.depths = spec.niah_depths;
      cfg.trials = spec.niah_trials;
      cfg.seed = mix_seed({spec.seed, len});
      const NiahReport r = niah_eval(*m, cfg);
      const std::string ctx_len = std::to_string(len);
      if (r.empty) {
        ctx.log().add(run, len, "niah.empty", 1.0, {{"context", ctx_len}});
        continue;
      }
      const double z = z_score(static_cast<double>(r.correct()),
                               static_cast<double>(r.trials()), r.chance);
      ctx.log().add(run, len, "niah.accuracy", r.accuracy(), {{"context", ctx_len}});
      ctx.log().add(run, len, "niah.z_vs_chance", z, {{"context", ctx_len}});
      ctx.report << "| " << run << " | " << len << " | " << fixed(r.accuracy(), 3) << " | "
                 << fixed(r.chance, 4) << " | " << fixed(z, 2) << " | ";
      for (const NiahBucket& b : r.buckets) {
        ctx.log().add(run, len, "niah.depth_accuracy", b.accuracy(),
                      {{"context", ctx_len}, {"depth", format_double(b.depth)}});
        ctx.report << format_double(b.depth) << ":" << fixed(b.accuracy(), 2) << " ";
      }
      ctx.report << "|\n";
    }
  }
}

void run_nll_curve(RunContext& ctx) {
  require_task(ctx, TaskKind::kLongRangeKv);
  const ExperimentSpec& spec = ctx.spec;
  Model model(spec.model, spec.seed);
  if (!train_arm(ctx, model, "main", nullptr)) return;
  const std::vector<Sequence> seqs = generate_corpus(heldout_spec(spec.data, spec.nll_sequences));
  const auto nll = token_nll(model, seqs);
  const NllCurve curve = nll_curve_from(nll);
  for (std::size_t i = 0; i < curve.cumulative.size(); ++i) {
    ctx.log().add("curve", i, "nll.cumulative", curve.cumulative[i]);
    ctx.log().add("curve", i, "nll.position_mean", curve.per_position[i]);
  }
  // Tokens before index min_gap cannot repeat an earlier value; the late
  // index is the last token before eos.
  const std::size_t early = spec.data.min_gap - 1;
  const std::size_t late = spec.data.seq_len - 3;
  std::vector<double> diff;
  for (const auto& seq : nll) {
    double run = 0.0, at_early = 0.0;
    for (std::size_t i = 0; i <= late; ++i) {
      run += seq[i];
      if (i == early) at_early = run / static_cast<double>(i + 1);
    }
    diff.push_back(at_early - run / static_cast<double>(late + 1));
  }
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= static_cast<double>(diff.size());
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  var /= static_cast<double>(diff.size() - 1);
  const double t = mean / std::sqrt(var / static_cast<double>(diff.size()));
  const double p = 0.5 * std::erfc(t / std::sqrt(2.0));
  ctx.log().add("summary", late, "nll.early", curve.cumulative[early]);
  ctx.log().add("summary", late, "nll.late", curve.cumulative[late]);
  ctx.log().add("summary", late, "nll.paired_mean_drop", mean);
  ctx.log().add("summary", late, "nll.paired_t", t);
  ctx.log().add("summary", late, "nll.one_sided_p", p);
  ctx.report << "Cumulative NLL at index " << early << ": " << fixed(curve.cumulative[early])
             << "; at index " << late << ": " << fixed(curve.cumulative[late]) << ".\n\n"
             << "Paired test over " << diff.size() << " sequences: mean drop " << fixed(mean)
             << " nats, t = " << fixed(t, 2) << ", one-sided p = " << p << ".\n";
}

}  // namespace nf::detail
