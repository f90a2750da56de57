// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: gen-data, train, run and report.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nf/error.hpp"
#include "nf/harness/corpus.hpp"
#include "nf/harness/experiment.hpp"
#include "nf/harness/metrics.hpp"
#include "nf/kv_config.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::string out;
};

void override_key(nf::KeyValueConfig& cfg, const std::string& key, const std::string& value) {
  const std::string old = cfg.get_string(key, "<unset>");
  std::cerr << "override " << key << ": " << old << " -> " << value << "\n";
  cfg.set(key, value);
}

nf::KeyValueConfig load_with_overrides(const Overrides& o) {
  nf::KeyValueConfig cfg = nf::KeyValueConfig::load(o.config);
  if (o.seed) override_key(cfg, "experiment.seed", std::to_string(*o.seed));
  if (o.steps) override_key(cfg, "train.steps", std::to_string(*o.steps));
  if (!o.out.empty()) override_key(cfg, "experiment.out", o.out);
  return cfg;
}

int run(const Overrides& o, bool force_train) {
  nf::KeyValueConfig cfg = load_with_overrides(o);
  if (force_train) cfg.set("experiment.kind", "train");
  const nf::ExperimentSpec spec = nf::ExperimentSpec::from_config(
      cfg, std::filesystem::path(o.config).parent_path());
  const nf::ExperimentResult result = nf::run_experiment(spec);
  std::cout << result.report;
  if (!spec.out_dir.empty()) std::cerr << "wrote " << spec.out_dir.string() << "\n";
  return result.ok ? 0 : 1;
}

int gen_data(const Overrides& o) {
  nf::KeyValueConfig cfg = nf::KeyValueConfig::load(o.config);
  if (o.seed) override_key(cfg, "data.seed", std::to_string(*o.seed));
  if (o.out.empty()) throw nf::ConfigError("gen-data needs --out");
  nf::KeyValueConfig data = cfg.section("data");
  if (!data.contains("vocab_size") && cfg.contains("model.vocab_size")) {
    data.set("vocab_size", cfg.get_string("model.vocab_size"));
  }
  const nf::CorpusSpec spec = nf::CorpusSpec::from_config(data);
  const auto corpus = nf::generate_corpus(spec);
  nf::save_corpus(o.out, corpus, spec.vocab_size);
  std::cout << "wrote " << corpus.size() << " " << nf::task_name(spec.task) << " sequences to "
            << o.out << "\n";
  return 0;
}

int report(const std::string& dir) {
  const std::filesystem::path path = std::filesystem::path(dir) / "report.md";
  std::ifstream in(path);
  if (!in) throw nf::IoError("cannot open " + path.string());
  std::cout << in.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nemoforge: hybrid Mamba-attention MoE language model toolkit"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "Key-value config file")->required()->check(
        CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Override the seed");
    cmd->add_option("--out", o.out, "Output path");
  };
  CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic corpus file");
  add_common(gen);
  CLI::App* train = app.add_subcommand("train", "Train a model and save a checkpoint");
  add_common(train);
  train->add_option("--steps", o.steps, "Override train.steps");
  CLI::App* runc = app.add_subcommand("run", "Run the experiment named in the config");
  add_common(runc);
  runc->add_option("--steps", o.steps, "Override train.steps");
  std::string report_dir;
  CLI::App* rep = app.add_subcommand("report", "Print an experiment's report");
  rep->add_option("--out", report_dir, "Experiment output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return gen_data(o);
    if (train->parsed()) return run(o, true);
    if (runc->parsed()) return run(o, false);
    if (rep->parsed()) return report(report_dir);
  } catch (const nf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
