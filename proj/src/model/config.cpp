// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/model/config.hpp"

#include <vector>

#include "nf/error.hpp"

namespace nf {

namespace {

std::size_t get_size(const KeyValueConfig& cfg, const std::string& key, std::size_t fallback) {
  const std::int64_t v = cfg.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

void put_section(KeyValueConfig& out, const std::string& prefix, const KeyValueConfig& section) {
  for (const auto& [k, v] : section.entries()) out.set(prefix + "." + k, v);
}

}  // namespace

char layer_letter(LayerKind kind) {
  switch (kind) {
    case LayerKind::kMamba: return 'M';
    case LayerKind::kMoe: return 'E';
    case LayerKind::kAttention: return 'A';
  }
  return '?';
}

double LayerPattern::attention_fraction() const {
  return layers.empty() ? 0.0 : double(attention) / double(layers.size());
}

std::string LayerPattern::str() const {
  std::string s;
  for (LayerKind k : layers) s.push_back(layer_letter(k));
  return s;
}

LayerPattern parse_layer_pattern(std::string_view s) {
  if (s.empty()) throw ParseError("layer pattern is empty", 0);
  LayerPattern p;
  for (std::size_t i = 0; i < s.size(); ++i) {
    switch (s[i]) {
      case 'M':
        p.layers.push_back(LayerKind::kMamba);
        ++p.mamba;
        break;
      case 'E':
        p.layers.push_back(LayerKind::kMoe);
        ++p.moe;
        break;
      case 'A':
        p.layers.push_back(LayerKind::kAttention);
        ++p.attention;
        break;
      default:
        throw ParseError("layer pattern: illegal character '" + std::string(1, s[i]) +
                             "' at index " + std::to_string(i),
                         i);
    }
  }
  return p;
}

Mamba2Config ModelConfig::mamba_config() const {
  Mamba2Config c = mamba;
  c.d_model = d_model;
  return c;
}

AttentionConfig ModelConfig::attention_config() const {
  AttentionConfig c = attention;
  c.d_model = d_model;
  return c;
}

MoeConfig ModelConfig::moe_config() const {
  MoeConfig c = moe;
  c.d_model = d_model;
  return c;
}

void ModelConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  check(vocab_size > 0, "vocab_size must be positive");
  check(d_model > 0, "d_model must be positive");
  check(max_context > 0, "max_context must be positive");
  check(mtp_lambda >= 0.0, "mtp_lambda must be non-negative");
  check(init_std > 0.0, "init_std must be positive");
  LayerPattern p;
  try {
    p = parse_layer_pattern(pattern);
  } catch (const ParseError& e) {
    problems.push_back(e.what());
  }
  for (TokenId id : {tokens.pad, tokens.eos, tokens.think_open, tokens.think_close}) {
    check(id >= 0 && static_cast<std::size_t>(id) < vocab_size,
          "special token id " + std::to_string(id) + " outside vocabulary of " +
              std::to_string(vocab_size));
  }
  auto sub = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      problems.push_back(std::string(name) + ": " + e.what());
    }
  };
  if (p.mamba > 0) sub("mamba", [&] { mamba_config().validate(); });
  if (p.attention > 0) sub("attention", [&] { attention_config().validate(); });
  if (p.moe > 0) sub("moe", [&] { moe_config().validate(); });
  check(precision.tail_fraction >= 0.0 && precision.tail_fraction <= 1.0,
        "precision tail_fraction must lie in [0, 1]");
  if (!problems.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& s : problems) msg += "\n  - " + s;
    throw ConfigError(msg);
  }
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& cfg) {
  ModelConfig c;
  const KeyValueConfig m = cfg.section("model");
  c.vocab_size = get_size(m, "vocab_size", c.vocab_size);
  c.d_model = get_size(m, "d_model", c.d_model);
  c.pattern = m.get_string("pattern", c.pattern);
  c.max_context = get_size(m, "max_context", c.max_context);
  c.init_std = m.get_double("init_std", c.init_std);
  c.norm_eps = static_cast<float>(m.get_double("norm_eps", c.norm_eps));

  const KeyValueConfig mb = cfg.section("mamba");
  c.mamba.heads = get_size(mb, "heads", c.mamba.heads);
  c.mamba.head_dim = get_size(mb, "head_dim", c.mamba.head_dim);
  c.mamba.state_dim = get_size(mb, "state_dim", c.mamba.state_dim);
  c.mamba.conv_width = get_size(mb, "conv_width", c.mamba.conv_width);

  const KeyValueConfig at = cfg.section("attention");
  c.attention.q_heads = get_size(at, "q_heads", c.attention.q_heads);
  c.attention.kv_heads = get_size(at, "kv_heads", c.attention.kv_heads);
  c.attention.head_dim = get_size(at, "head_dim", c.attention.head_dim);

  const KeyValueConfig moe = cfg.section("moe");
  c.moe.num_experts = get_size(moe, "num_experts", c.moe.num_experts);
  c.moe.top_k = get_size(moe, "top_k", c.moe.top_k);
  c.moe.expert_dim = get_size(moe, "expert_dim", c.moe.expert_dim);
  c.moe.latent_dim = get_size(moe, "latent_dim", 0);
  c.moe.shared_expert = moe.get_bool("shared_expert", c.moe.shared_expert);
  c.moe.aux_loss_coef = moe.get_double("aux_loss_coef", c.moe.aux_loss_coef);

  const KeyValueConfig mtp = cfg.section("mtp");
  c.mtp_depth = get_size(mtp, "depth", c.mtp_depth);
  c.mtp_lambda = mtp.get_double("lambda", c.mtp_lambda);

  c.precision = quant::PrecisionPolicy::from_config(cfg.section("precision"));

  const KeyValueConfig tk = cfg.section("tokens");
  c.tokens.pad = static_cast<TokenId>(tk.get_int("pad", c.tokens.pad));
  c.tokens.eos = static_cast<TokenId>(tk.get_int("eos", c.tokens.eos));
  c.tokens.think_open = static_cast<TokenId>(tk.get_int("think_open", c.tokens.think_open));
  c.tokens.think_close = static_cast<TokenId>(tk.get_int("think_close", c.tokens.think_close));
  c.validate();
  return c;
}

KeyValueConfig ModelConfig::to_config() const {
  KeyValueConfig cfg;
  cfg.set("model.vocab_size", std::to_string(vocab_size));
  cfg.set("model.d_model", std::to_string(d_model));
  cfg.set("model.pattern", pattern);
  cfg.set("model.max_context", std::to_string(max_context));
  cfg.set("model.init_std", format_double(init_std));
  cfg.set("model.norm_eps", format_double(norm_eps));
  cfg.set("mamba.heads", std::to_string(mamba.heads));
  cfg.set("mamba.head_dim", std::to_string(mamba.head_dim));
  cfg.set("mamba.state_dim", std::to_string(mamba.state_dim));
  cfg.set("mamba.conv_width", std::to_string(mamba.conv_width));
  cfg.set("attention.q_heads", std::to_string(attention.q_heads));
  cfg.set("attention.kv_heads", std::to_string(attention.kv_heads));
  cfg.set("attention.head_dim", std::to_string(attention.head_dim));
  KeyValueConfig moe_section;
  moe.to_config(moe_section);
  put_section(cfg, "moe", moe_section);
  cfg.set("mtp.depth", std::to_string(mtp_depth));
  cfg.set("mtp.lambda", format_double(mtp_lambda));
  KeyValueConfig prec;
  precision.to_config(prec);
  put_section(cfg, "precision", prec);
  cfg.set("tokens.pad", std::to_string(tokens.pad));
  cfg.set("tokens.eos", std::to_string(tokens.eos));
  cfg.set("tokens.think_open", std::to_string(tokens.think_open));
  cfg.set("tokens.think_close", std::to_string(tokens.think_close));
  return cfg;
}

}  // namespace nf
