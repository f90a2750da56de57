// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/moe/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nf/error.hpp"
#include "nf/ops.hpp"

namespace nf {

using quant::LinearKind;

void MoeConfig::validate() const {
  if (d_model == 0 || num_experts == 0 || expert_dim == 0) {
    throw ConfigError("moe: d_model, num_experts and expert_dim must be positive");
  }
  if (top_k == 0 || top_k > num_experts) {
    throw ConfigError("moe: top_k " + std::to_string(top_k) + " must be in [1, " +
                      std::to_string(num_experts) + "]");
  }
  if (latent_dim > d_model) {
    throw ConfigError("moe: latent_dim " + std::to_string(latent_dim) +
                      " exceeds d_model " + std::to_string(d_model));
  }
  if (aux_loss_coef < 0.0) throw ConfigError("moe: aux_loss_coef must be non-negative");
}

MoeConfig MoeConfig::from_config(const KeyValueConfig& section, std::size_t d_model) {
  MoeConfig c;
  c.d_model = d_model;
  c.num_experts = static_cast<std::size_t>(section.get_int("num_experts", 8));
  c.top_k = static_cast<std::size_t>(section.get_int("top_k", 2));
  c.expert_dim = static_cast<std::size_t>(section.get_int("expert_dim", 64));
  c.latent_dim = static_cast<std::size_t>(section.get_int("latent_dim", 0));
  c.shared_expert = section.get_bool("shared_expert", true);
  c.aux_loss_coef = section.get_double("aux_loss_coef", 0.01);
  c.validate();
  return c;
}

void MoeConfig::to_config(KeyValueConfig& section) const {
  section.set("num_experts", std::to_string(num_experts));
  section.set("top_k", std::to_string(top_k));
  section.set("expert_dim", std::to_string(expert_dim));
  if (latent()) section.set("latent_dim", std::to_string(latent_dim));
  section.set("shared_expert", shared_expert ? "true" : "false");
  section.set("aux_loss_coef", format_double(aux_loss_coef));
}

Routing route_topk(std::span<const float> logits, std::size_t k) {
  if (k == 0 || k > logits.size()) {
    throw ConfigError("route_topk: K=" + std::to_string(k) + " with " +
                      std::to_string(logits.size()) + " experts");
  }
  for (float v : logits) {
    if (!std::isfinite(v)) throw NumericInputError("route_topk: non-finite gate logit");
  }
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  Routing r;
  r.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  const double top = logits[r.indices.front()];
  double z = 0.0;
  for (std::size_t i : r.indices) {
    r.weights.push_back(std::exp(double(logits[i]) - top));
    z += r.weights.back();
  }
  for (double& w : r.weights) w /= z;
  return r;
}

Expert::Expert(std::size_t dim, std::size_t hidden, LinearKind kind, Rng& rng, double init_std)
    : gate_(dim, hidden, kind, rng, init_std),
      up_(dim, hidden, kind, rng, init_std),
      down_(hidden, dim, kind, rng, init_std) {}

Tensor Expert::forward(const Tensor& x, const ForwardContext& ctx) const {
  return down_.forward(mul(silu(gate_.forward(x, ctx)), up_.forward(x, ctx)), ctx);
}

std::size_t Expert::parameter_count() const {
  return gate_.weight().numel() + up_.weight().numel() + down_.weight().numel();
}

void Expert::append_parameters(const std::string& prefix, ParameterList& out) const {
  gate_.append_parameters(prefix + ".gate", out);
  up_.append_parameters(prefix + ".up", out);
  down_.append_parameters(prefix + ".down", out);
}

MoeLayer::MoeLayer(const MoeConfig& config, Rng& rng, double init_std) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model, w = config_.working_dim();
  router_ = Linear(d, config_.num_experts, LinearKind::kRouterGate, rng, init_std);
  if (config_.latent()) {
    down_ = Linear(d, w, LinearKind::kLatentDownProjection, rng, init_std);
    up_ = Linear(w, d, LinearKind::kLatentUpProjection, rng, init_std);
  }
  for (std::size_t e = 0; e < config_.num_experts; ++e) {
    experts_.emplace_back(w, config_.expert_dim, LinearKind::kRoutedExpert, rng, init_std);
  }
  if (config_.shared_expert) {
    shared_ = Expert(d, config_.expert_dim, LinearKind::kSharedExpert, rng, init_std);
  }
}

MoeOutput MoeLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  return run(x, ctx, {});
}

MoeOutput MoeLayer::forward_with_routing(const Tensor& x, const ForwardContext& ctx,
                                         std::span<const std::size_t> forced) const {
  if (x.rank() != 2 || forced.size() != x.dim(0) * config_.top_k) {
    throw DimensionError("moe: forced routing needs top_k entries per token");
  }
  for (std::size_t e : forced) {
    if (e >= config_.num_experts) throw IndexError("moe: forced expert out of range");
  }
  return run(x, ctx, forced);
}

MoeOutput MoeLayer::run(const Tensor& x, const ForwardContext& ctx,
                        std::span<const std::size_t> forced) const {
  const std::size_t d = config_.d_model, n = config_.num_experts, k = config_.top_k;
  if (x.rank() != 2 || x.dim(1) != d) {
    throw DimensionError("moe: expected [T x " + std::to_string(d) + "], got " +
                         shape_str(x.shape()));
  }
  const std::size_t steps = x.dim(0);
  Tensor logits = router_.forward(x, ctx);

  std::vector<std::size_t> chosen(steps * k);
  if (!forced.empty()) {
    std::copy(forced.begin(), forced.end(), chosen.begin());
  } else {
    for (std::size_t t = 0; t < steps; ++t) {
      Routing r = route_topk(logits.data().subspan(t * n, n), k);
      std::copy(r.indices.begin(), r.indices.end(), chosen.begin() + t * k);
    }
  }
  Tensor weights = softmax(gather_cols(logits, chosen, k), 1);  // [T×K]

  MoeOutput out;
  out.expert_load.assign(n, 0);
  // Token rows and flat weight positions per expert, in token order.
  std::vector<std::vector<std::size_t>> rows(n), slots(n);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t e = chosen[t * k + j];
      rows[e].push_back(t);
      slots[e].push_back(t * k + j);
      ++out.expert_load[e];
    }
  }

  const Tensor routed_in = config_.latent() ? down_.forward(x, ctx) : x;
  std::vector<RowContribution> parts;
  for (std::size_t e = 0; e < n; ++e) {
    if (rows[e].empty()) continue;
    Tensor ye = experts_[e].forward(gather_rows(routed_in, rows[e]), ctx);
    parts.push_back({rows[e], scale_rows(ye, gather_elements(weights, slots[e]))});
  }
  Tensor routed = index_add_rows(steps, config_.working_dim(), parts);
  if (config_.latent()) routed = up_.forward(routed, ctx);
  out.y = config_.shared_expert ? add(routed, shared_.forward(x, ctx)) : routed;

  // Load balancing: coef · N · Σ_e f_e · P_e, f_e the share of assignments
  // to e and P_e the mean router probability of e.
  if (config_.aux_loss_coef > 0.0 && steps > 0) {
    Tensor fraction({1, n});
    for (std::size_t e = 0; e < n; ++e) {
      fraction.mutable_data()[e] = static_cast<float>(double(out.expert_load[e]) / (steps * k));
    }
    Tensor mean_prob = matmul(Tensor::filled({1, steps}, 1.0f / float(steps)), softmax(logits, 1));
    out.aux_loss = scale(sum(mul(mean_prob, fraction)), static_cast<float>(config_.aux_loss_coef * n));
  } else {
    out.aux_loss = Tensor::scalar(0.0f);
  }
  return out;
}

std::vector<Linear*> MoeLayer::linears() {
  std::vector<Linear*> all = {&router_};
  if (config_.latent()) {
    all.push_back(&down_);
    all.push_back(&up_);
  }
  auto add_expert = [&](Expert& e) {
    all.push_back(&e.gate());
    all.push_back(&e.up());
    all.push_back(&e.down());
  };
  for (Expert& e : experts_) add_expert(e);
  if (config_.shared_expert) add_expert(shared_);
  return all;
}

std::vector<const Linear*> MoeLayer::linears() const {
  std::vector<Linear*> all = const_cast<MoeLayer*>(this)->linears();
  return {all.begin(), all.end()};
}

std::size_t MoeLayer::total_parameters() const {
  std::size_t total = router_.weight().numel();
  for (const Expert& e : experts_) total += e.parameter_count();
  if (config_.shared_expert) total += shared_.parameter_count();
  if (config_.latent()) total += down_.weight().numel() + up_.weight().numel();
  return total;
}

std::size_t MoeLayer::active_parameters() const {
  std::size_t total = router_.weight().numel() + config_.top_k * experts_.front().parameter_count();
  if (config_.shared_expert) total += shared_.parameter_count();
  if (config_.latent()) total += down_.weight().numel() + up_.weight().numel();
  return total;
}

void MoeLayer::append_parameters(const std::string& prefix, ParameterList& out) const {
  router_.append_parameters(prefix + ".router", out);
  if (config_.latent()) {
    down_.append_parameters(prefix + ".latent_down", out);
    up_.append_parameters(prefix + ".latent_up", out);
  }
  for (std::size_t e = 0; e < experts_.size(); ++e) {
    experts_[e].append_parameters(prefix + ".expert" + std::to_string(e), out);
  }
  if (config_.shared_expert) shared_.append_parameters(prefix + ".shared", out);
}

}  // namespace nf
