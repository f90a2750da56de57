// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/layers/mamba2.hpp"

#include <cmath>

#include "nf/error.hpp"
#include "nf/layers/ssm_ops.hpp"
#include "nf/ops.hpp"

namespace nf {

void Mamba2Config::validate() const {
  if (d_model == 0 || heads == 0 || head_dim == 0 || state_dim == 0 || conv_width == 0) {
    throw ConfigError("mamba: all dimensions must be positive");
  }
  if (!(dt_min > 0.0f) || !(dt_max >= dt_min)) {
    throw ConfigError("mamba: need 0 < dt_min <= dt_max");
  }
}

Mamba2Layer::Mamba2Layer(const Mamba2Config& config, Rng& rng, double init_std)
    : config_(config) {
  config_.validate();
  const std::size_t h = config_.heads, ch = config_.conv_channels();
  in_proj_ = Linear(config_.d_model, config_.inner() + ch + h,
                    quant::LinearKind::kMambaInProjection, rng, init_std);
  out_proj_ = Linear(config_.inner(), config_.d_model, quant::LinearKind::kMambaOutProjection,
                     rng, init_std);
  const double conv_bound = 1.0 / std::sqrt(double(config_.conv_width));
  conv_weight_ = Tensor({config_.conv_width, ch}, true);
  for (float& v : conv_weight_.mutable_data()) {
    v = static_cast<float>((2.0 * rng.uniform() - 1.0) * conv_bound);
  }
  conv_bias_ = Tensor({ch}, true);
  dt_bias_ = Tensor({h}, true);
  a_log_ = Tensor({h}, true);
  d_skip_ = Tensor(Shape{h}, std::vector<float>(h, 1.0f), true);
  for (std::size_t i = 0; i < h; ++i) {
    // Initial step sizes log-uniform in [1e-3, 1e-1]; bias is softplus⁻¹.
    const double dt = std::exp(std::log(1e-3) + rng.uniform() * (std::log(1e-1) - std::log(1e-3)));
    dt_bias_.mutable_data()[i] = static_cast<float>(dt + std::log(-std::expm1(-dt)));
    a_log_.mutable_data()[i] = static_cast<float>(std::log(1.0 + 15.0 * rng.uniform()));
  }
}

MambaState Mamba2Layer::initial_state() const {
  MambaState s;
  s.conv_tail.assign((config_.conv_width - 1) * config_.conv_channels(), 0.0f);
  s.ssm.assign(config_.inner() * config_.state_dim, 0.0f);
  return s;
}

void Mamba2Layer::check_state(const MambaState& state) const {
  const MambaState expect = initial_state();
  if (state.conv_tail.size() != expect.conv_tail.size() || state.ssm.size() != expect.ssm.size()) {
    throw ContractError("mamba: state does not match this layer's configuration");
  }
}

Tensor Mamba2Layer::forward(const Tensor& u, const ForwardContext& ctx) const {
  MambaState state = initial_state();
  return extend(u, state, ctx);
}

Tensor Mamba2Layer::extend(const Tensor& u, MambaState& state, const ForwardContext& ctx) const {
  check_state(state);
  if (u.rank() != 2 || u.dim(1) != config_.d_model) {
    throw DimensionError("mamba: expected [T x " + std::to_string(config_.d_model) + "], got " +
                         shape_str(u.shape()));
  }
  const std::size_t di = config_.inner(), n = config_.state_dim, ch = config_.conv_channels();
  Tensor proj = in_proj_.forward(u, ctx);
  Tensor z = slice_cols(proj, 0, di);
  Tensor xbc_raw = slice_cols(proj, di, di + ch);
  Tensor dt_raw = slice_cols(proj, di + ch, di + ch + config_.heads);

  ConvResult conv = causal_conv1d(xbc_raw, conv_weight_, conv_bias_, state.conv_tail);
  Tensor xbc = silu(conv.y);
  Tensor x = slice_cols(xbc, 0, di);
  Tensor b = slice_cols(xbc, di, di + n);
  Tensor c = slice_cols(xbc, di + n, di + 2 * n);

  Tensor dt = softplus_clamp(add_bias(dt_raw, dt_bias_), config_.dt_min, config_.dt_max);
  Tensor a = scale(exp(a_log_), -1.0f);
  ScanResult scan = ssm_scan(x, dt, a, b, c, d_skip_, state.ssm);

  state.conv_tail = std::move(conv.tail);
  state.ssm = std::move(scan.state);
  state.tokens += u.dim(0);
  return out_proj_.forward(mul(scan.y, silu(z)), ctx);
}

Tensor Mamba2Layer::step(const Tensor& u, MambaState& state, const ForwardContext& ctx) const {
  if (u.rank() != 2 || u.dim(0) != 1) {
    throw DimensionError("mamba step expects a single row, got " + shape_str(u.shape()));
  }
  return extend(u, state, ctx);
}

void Mamba2Layer::append_parameters(const std::string& prefix, ParameterList& out) const {
  in_proj_.append_parameters(prefix + ".in_proj", out);
  out.push_back({prefix + ".conv_weight", conv_weight_});
  out.push_back({prefix + ".conv_bias", conv_bias_});
  out.push_back({prefix + ".dt_bias", dt_bias_});
  out.push_back({prefix + ".a_log", a_log_});
  out.push_back({prefix + ".d_skip", d_skip_});
  out_proj_.append_parameters(prefix + ".out_proj", out);
}

}  // namespace nf
