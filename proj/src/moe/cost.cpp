// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/error.hpp"
#include "nf/moe/moe.hpp"

namespace nf {

LatentMoeShape derive_latent_config(const StandardMoeShape& standard, std::size_t latent_dim) {
  if (latent_dim == 0 || latent_dim > standard.d_model || standard.d_model % latent_dim != 0) {
    throw ConfigError("latent dim " + std::to_string(latent_dim) + " must divide d_model " +
                      std::to_string(standard.d_model));
  }
  const std::size_t factor = standard.d_model / latent_dim;
  return {standard.num_experts * factor, standard.top_k * factor};
}

MoeCostReport cost_report(const MoeConfig& config, double bytes_per_param) {
  const std::size_t w = config.working_dim(), k = config.top_k, m = config.expert_dim;
  MoeCostReport r;
  r.params_per_expert = 3 * w * m;
  r.routed_param_bytes_per_token = double(k) * double(r.params_per_expert) * bytes_per_param;
  r.all_to_all_elements_per_token = 2 * k * w;
  r.nonlinear_budget = k * m;
  return r;
}

}  // namespace nf
