// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nf/kv_config.hpp"
#include "nf/layers/linear.hpp"

namespace nf {

struct MoeConfig {
  std::size_t d_model = 64;
  std::size_t num_experts = 8;
  std::size_t top_k = 2;
  std::size_t expert_dim = 64;  // m
  // 0 selects a standard MoE layer; otherwise routed experts work in this
  // latent dimension, at most d_model.
  std::size_t latent_dim = 0;
  bool shared_expert = true;
  double aux_loss_coef = 0.01;

  bool latent() const { return latent_dim != 0; }
  std::size_t working_dim() const { return latent() ? latent_dim : d_model; }
  void validate() const;

  // Keys under the given section: num_experts, top_k, expert_dim,
  // latent_dim, shared_expert, aux_loss_coef. d_model comes from the model.
  static MoeConfig from_config(const KeyValueConfig& section, std::size_t d_model);
  void to_config(KeyValueConfig& section) const;
};

struct Routing {
  std::vector<std::size_t> indices;  // selected experts, best first
  std::vector<double> weights;       // softmax over the selected logits
};

// The K largest logits, ties going to the lower index, with weights from a
// softmax over just those K logits. Throws ConfigError when K is 0 or
// exceeds the number of logits.
Routing route_topk(std::span<const float> logits, std::size_t k);

// Gated FFN: (silu(x·W_gate) ⊙ x·W_up)·W_down, working dim → m → working dim.
class Expert {
 public:
  Expert() = default;
  Expert(std::size_t dim, std::size_t hidden, quant::LinearKind kind, Rng& rng, double init_std);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  std::size_t parameter_count() const;

  Linear& gate() { return gate_; }
  Linear& up() { return up_; }
  Linear& down() { return down_; }
  const Linear& gate() const { return gate_; }
  const Linear& up() const { return up_; }
  const Linear& down() const { return down_; }
  void append_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  Linear gate_, up_, down_;
};

struct MoeOutput {
  Tensor y;         // [T×d]
  Tensor aux_loss;  // scalar load-balancing loss, already multiplied by its coefficient
  // Token-slot assignments per expert in this call.
  std::vector<std::size_t> expert_load;
};

// Standard MoE when config.latent_dim == 0, LatentMoE otherwise:
//
//   standard: y = Σ_k w_k · E_k(x) + S(x)
//   latent:   y = up(Σ_k w_k · E_k(down(x))) + S(x)
//
// The router always reads the d-dimensional token; the shared expert S
// always works in d. Contributions are summed per token in ascending expert
// index, so results do not depend on dispatch order.
class MoeLayer {
 public:
  MoeLayer() = default;
  MoeLayer(const MoeConfig& config, Rng& rng, double init_std);

  MoeOutput forward(const Tensor& x, const ForwardContext& ctx) const;
  // Routes every token to the given experts instead of the router's top-K
  // (K entries per token, row-major). Weights still come from the router.
  MoeOutput forward_with_routing(const Tensor& x, const ForwardContext& ctx,
                                 std::span<const std::size_t> forced) const;

  const MoeConfig& config() const { return config_; }
  Linear& router() { return router_; }
  const Linear& router() const { return router_; }
  std::vector<Expert>& experts() { return experts_; }
  const std::vector<Expert>& experts() const { return experts_; }
  Expert& shared() { return shared_; }
  const Expert& shared() const { return shared_; }
  Linear& latent_down() { return down_; }
  Linear& latent_up() { return up_; }
  const Linear& latent_down() const { return down_; }
  const Linear& latent_up() const { return up_; }

  // Every linear layer of this block, for precision assignment.
  std::vector<Linear*> linears();
  std::vector<const Linear*> linears() const;
  std::size_t total_parameters() const;
  // Parameters touched per token: router, K routed experts, shared expert and
  // latent projections.
  std::size_t active_parameters() const;
  void append_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  MoeOutput run(const Tensor& x, const ForwardContext& ctx,
                std::span<const std::size_t> forced) const;

  MoeConfig config_;
  Linear router_;
  std::vector<Expert> experts_;
  Expert shared_;
  Linear down_, up_;
};

struct StandardMoeShape {
  std::size_t d_model = 0;
  std::size_t num_experts = 0;
  std::size_t top_k = 0;
  std::size_t expert_dim = 0;
};

struct LatentMoeShape {
  std::size_t num_experts = 0;
  std::size_t top_k = 0;
};

// Scales experts and top-K by d/ℓ. Throws ConfigError unless 0 < ℓ ≤ d and ℓ
// divides d.
LatentMoeShape derive_latent_config(const StandardMoeShape& standard, std::size_t latent_dim);

struct MoeCostReport {
  // Routed expert weights read per token: K · 3 · working_dim · m · bytes.
  double routed_param_bytes_per_token = 0.0;
  // Dispatch plus combine: 2 · K · working_dim.
  std::size_t all_to_all_elements_per_token = 0;
  // K · m.
  std::size_t nonlinear_budget = 0;
  std::size_t params_per_expert = 0;
};

MoeCostReport cost_report(const MoeConfig& config, double bytes_per_param = 4.0);

}  // namespace nf
