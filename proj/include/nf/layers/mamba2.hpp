// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "nf/layers/linear.hpp"

namespace nf {

struct Mamba2Config {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t state_dim = 16;
  std::size_t conv_width = 4;
  float dt_min = 1e-4f;
  float dt_max = 10.0f;

  std::size_t inner() const { return heads * head_dim; }
  // Channels that pass through the convolution: x, B and C.
  std::size_t conv_channels() const { return inner() + 2 * state_dim; }
  void validate() const;
};

// Recurrent state of one Mamba-2 layer. Its size is fixed by the config and
// does not depend on how many tokens have been processed.
struct MambaState {
  std::vector<float> conv_tail;  // [(W−1)×conv_channels]
  std::vector<float> ssm;        // [H×P×N]
  std::size_t tokens = 0;

  std::size_t bytes() const { return (conv_tail.size() + ssm.size()) * sizeof(float); }
};

// Mamba-2 mixer with one scalar decay per head:
//   [z, xBC, dt_raw] = in_proj(u)
//   xBC = silu(causal_conv(xBC)), split into x, B, C
//   dt = clamp(softplus(dt_raw + dt_bias), dt_min, dt_max), A = −exp(a_log)
//   y = scan(x, dt, A, B, C, D) · silu(z), then out_proj
class Mamba2Layer {
 public:
  Mamba2Layer() = default;
  Mamba2Layer(const Mamba2Config& config, Rng& rng, double init_std);

  MambaState initial_state() const;
  // Full sequence from the empty state. u[T×d] → [T×d].
  Tensor forward(const Tensor& u, const ForwardContext& ctx) const;
  // Continues from `state` and advances it past u's T tokens. Throws
  // ContractError when the state does not belong to this configuration.
  Tensor extend(const Tensor& u, MambaState& state, const ForwardContext& ctx) const;
  // One token, u[1×d].
  Tensor step(const Tensor& u, MambaState& state, const ForwardContext& ctx) const;

  const Mamba2Config& config() const { return config_; }
  Linear& in_proj() { return in_proj_; }
  Linear& out_proj() { return out_proj_; }
  const Linear& in_proj() const { return in_proj_; }
  const Linear& out_proj() const { return out_proj_; }
  Tensor& a_log() { return a_log_; }
  Tensor& dt_bias() { return dt_bias_; }
  Tensor& d_skip() { return d_skip_; }
  Tensor& conv_weight() { return conv_weight_; }
  Tensor& conv_bias() { return conv_bias_; }
  void append_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  void check_state(const MambaState& state) const;

  Mamba2Config config_;
  Linear in_proj_, out_proj_;
  Tensor conv_weight_, conv_bias_;  // [W×C], [C]
  Tensor dt_bias_, a_log_, d_skip_;  // [H] each
};

}  // namespace nf
