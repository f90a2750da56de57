// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "nf/moe/moe.hpp"

namespace nf::testing {

inline std::vector<double> row_values(const Tensor& x, std::size_t t) {
  std::vector<double> r(x.dim(1));
  for (std::size_t j = 0; j < r.size(); ++j) r[j] = x[t * x.dim(1) + j];
  return r;
}

inline std::vector<double> linear_d(const std::vector<double>& v, const Linear& l) {
  const std::size_t n = l.out_features();
  std::vector<double> out(n, 0.0);
  for (std::size_t p = 0; p < v.size(); ++p) {
    for (std::size_t j = 0; j < n; ++j) out[j] += v[p] * l.weight()[p * n + j];
  }
  return out;
}

inline std::vector<double> expert_d(const std::vector<double>& v, const Expert& e) {
  std::vector<double> g = linear_d(v, e.gate()), u = linear_d(v, e.up());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = g[i] / (1.0 + std::exp(-g[i])) * u[i];
  return linear_d(g, e.down());
}

// Evaluates every expert on every token and keeps the top-K through a 0/1
// mask with renormalized softmax weights, all in double.
inline std::vector<std::vector<double>> dense_oracle(const MoeLayer& layer, const Tensor& x) {
  const MoeConfig& c = layer.config();
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t < x.dim(0); ++t) {
    const std::vector<double> xt = row_values(x, t);
    const std::vector<double> logits = linear_d(xt, layer.router());
    std::vector<double> mask(c.num_experts, 0.0);
    for (std::size_t e = 0; e < c.num_experts; ++e) {
      std::size_t above = 0;
      for (std::size_t o = 0; o < c.num_experts; ++o) {
        if (logits[o] > logits[e] || (logits[o] == logits[e] && o < e)) ++above;
      }
      if (above < c.top_k) mask[e] = 1.0;
    }
    double mx = -1e300, z = 0.0;
    for (std::size_t e = 0; e < c.num_experts; ++e) {
      if (mask[e] > 0) mx = std::max(mx, logits[e]);
    }
    for (std::size_t e = 0; e < c.num_experts; ++e) z += mask[e] * std::exp(logits[e] - mx);
    const std::vector<double> in = c.latent() ? linear_d(xt, layer.latent_down()) : xt;
    std::vector<double> routed(c.working_dim(), 0.0);
    for (std::size_t e = 0; e < c.num_experts; ++e) {
      const std::vector<double> ye = expert_d(in, layer.experts()[e]);
      const double w = mask[e] * std::exp(logits[e] - mx) / z;
      for (std::size_t j = 0; j < ye.size(); ++j) routed[j] += w * ye[j];
    }
    std::vector<double> y = c.latent() ? linear_d(routed, layer.latent_up()) : routed;
    if (c.shared_expert) {
      const std::vector<double> s = expert_d(xt, layer.shared());
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += s[j];
    }
    out.push_back(y);
  }
  return out;
}

inline double max_abs_diff(const Tensor& y, const std::vector<std::vector<double>>& m) {
  double worst = 0.0;
  for (std::size_t t = 0; t < m.size(); ++t) {
    for (std::size_t j = 0; j < m[t].size(); ++j) {
      worst = std::max(worst, std::abs(y[t * m[t].size() + j] - m[t][j]));
    }
  }
  return worst;
}

}  // namespace nf::testing
