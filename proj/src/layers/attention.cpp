// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/layers/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/kernel_util.hpp"
#include "nf/ops.hpp"

namespace nf {

using detail::View;

void AttentionConfig::validate() const {
  if (d_model == 0 || q_heads == 0 || kv_heads == 0 || head_dim == 0) {
    throw ConfigError("attention: all dimensions must be positive");
  }
  if (q_heads % kv_heads != 0) {
    throw ConfigError("attention: " + std::to_string(q_heads) +
                      " query heads cannot be grouped over " + std::to_string(kv_heads) +
                      " KV heads");
  }
}

std::size_t kv_cache_bytes(const AttentionConfig& config, std::size_t tokens) {
  return 2 * config.kv_heads * config.head_dim * tokens * sizeof(float);
}

Tensor attention_core(const Tensor& q, const Tensor& k_new, const Tensor& v_new,
                      std::span<const float> past_k, std::span<const float> past_v,
                      std::size_t q_heads, std::size_t kv_heads, std::size_t head_dim) {
  const std::size_t qw = q_heads * head_dim, kw = kv_heads * head_dim;
  if (q.rank() != 2 || q.dim(1) != qw || k_new.shape() != Shape{q.dim(0), kw} ||
      v_new.shape() != k_new.shape()) {
    throw DimensionError("attention_core: incompatible q " + shape_str(q.shape()) + ", k " +
                         shape_str(k_new.shape()) + ", v " + shape_str(v_new.shape()));
  }
  if (past_k.size() != past_v.size() || past_k.size() % kw != 0) {
    throw ContractError("attention_core: cached keys and values disagree");
  }
  const std::size_t steps = q.dim(0), past = past_k.size() / kw, total = past + steps;
  const std::size_t group = q_heads / kv_heads;
  const double scale = 1.0 / std::sqrt(double(head_dim));
  const bool record = autodiff::should_record({&q, &k_new, &v_new});
  // Attention weights per (t, head, key), kept for the backward pass.
  std::vector<float> probs;
  if (record) probs.assign(steps * q_heads * total, 0.0f);

  Tensor out({steps, qw});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> qv(q), kv(k_new), vv(v_new);
    auto key = [&](std::size_t j, std::size_t i) {
      return j < past ? T(past_k[j * kw + i]) : kv[(j - past) * kw + i];
    };
    auto value = [&](std::size_t j, std::size_t i) {
      return j < past ? T(past_v[j * kw + i]) : vv[(j - past) * kw + i];
    };
    std::vector<T> w(total);
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t visible = past + t + 1;
      for (std::size_t h = 0; h < q_heads; ++h) {
        const std::size_t g = h / group;
        const T* qrow = qv.ptr() + t * qw + h * head_dim;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < visible; ++j) {
          T s = T(0);
          for (std::size_t i = 0; i < head_dim; ++i) s += qrow[i] * key(j, g * head_dim + i);
          w[j] = s * T(scale);
          mx = std::max(mx, w[j]);
        }
        T z = T(0);
        for (std::size_t j = 0; j < visible; ++j) {
          w[j] = std::exp(w[j] - mx);
          z += w[j];
        }
        T* orow = o.data() + t * qw + h * head_dim;
        for (std::size_t i = 0; i < head_dim; ++i) orow[i] = T(0);
        for (std::size_t j = 0; j < visible; ++j) {
          const T p = w[j] / z;
          if (record) probs[(t * q_heads + h) * total + j] = static_cast<float>(p);
          for (std::size_t i = 0; i < head_dim; ++i) orow[i] += p * value(j, g * head_dim + i);
        }
      }
    }
  });

  if (record) {
    std::vector<float> pk(past_k.begin(), past_k.end()), pv(past_v.begin(), past_v.end());
    autodiff::record(
        {q, k_new, v_new}, out,
        [q, k_new, v_new, out, probs = std::move(probs), pk = std::move(pk),
         pv = std::move(pv), steps, past, total, q_heads, group, head_dim, qw, kw, scale]() {
          auto go = out.grad();
          auto key = [&](std::size_t j, std::size_t i) {
            return j < past ? pk[j * kw + i] : k_new[(j - past) * kw + i];
          };
          auto value = [&](std::size_t j, std::size_t i) {
            return j < past ? pv[j * kw + i] : v_new[(j - past) * kw + i];
          };
          std::vector<float> dq(steps * qw, 0.0f), dk(steps * kw, 0.0f), dv(steps * kw, 0.0f);
          std::vector<double> dp(total);
          for (std::size_t t = 0; t < steps; ++t) {
            const std::size_t visible = past + t + 1;
            for (std::size_t h = 0; h < q_heads; ++h) {
              const std::size_t g = h / group;
              const float* prow = probs.data() + (t * q_heads + h) * total;
              const float* grow = go.data() + t * qw + h * head_dim;
              double dot = 0.0;
              for (std::size_t j = 0; j < visible; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < head_dim; ++i) s += grow[i] * value(j, g * head_dim + i);
                dp[j] = s;
                dot += prow[j] * s;
                if (j >= past) {
                  float* dvrow = dv.data() + (j - past) * kw + g * head_dim;
                  for (std::size_t i = 0; i < head_dim; ++i) dvrow[i] += prow[j] * grow[i];
                }
              }
              for (std::size_t j = 0; j < visible; ++j) {
                const double ds = prow[j] * (dp[j] - dot) * scale;
                for (std::size_t i = 0; i < head_dim; ++i) {
                  dq[t * qw + h * head_dim + i] += static_cast<float>(ds * key(j, g * head_dim + i));
                  if (j >= past) {
                    dk[(j - past) * kw + g * head_dim + i] +=
                        static_cast<float>(ds * q[t * qw + h * head_dim + i]);
                  }
                }
              }
            }
          }
          autodiff::accumulate(q, dq);
          autodiff::accumulate(k_new, dk);
          autodiff::accumulate(v_new, dv);
        });
  }
  return out;
}

AttentionLayer::AttentionLayer(const AttentionConfig& config, Rng& rng, double init_std)
    : config_(config) {
  config_.validate();
  const std::size_t width = (config_.q_heads + 2 * config_.kv_heads) * config_.head_dim;
  qkv_ = Linear(config_.d_model, width, quant::LinearKind::kQkvProjection, rng, init_std);
  out_proj_ = Linear(config_.q_heads * config_.head_dim, config_.d_model,
                     quant::LinearKind::kAttentionOutProjection, rng, init_std);
}

KvCache AttentionLayer::empty_cache() const {
  KvCache cache;
  cache.kv_width = config_.kv_width();
  return cache;
}

Tensor AttentionLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  KvCache cache = empty_cache();
  return extend(x, cache, ctx);
}

Tensor AttentionLayer::extend(const Tensor& x, KvCache& cache, const ForwardContext& ctx) const {
  if (cache.kv_width != config_.kv_width()) {
    throw ContractError("attention: cache does not match this layer's configuration");
  }
  if (x.rank() != 2 || x.dim(1) != config_.d_model) {
    throw DimensionError("attention: expected [T x " + std::to_string(config_.d_model) +
                         "], got " + shape_str(x.shape()));
  }
  const std::size_t qw = config_.q_heads * config_.head_dim, kw = config_.kv_width();
  Tensor proj = qkv_.forward(x, ctx);
  Tensor q = slice_cols(proj, 0, qw);
  Tensor k = slice_cols(proj, qw, qw + kw);
  Tensor v = slice_cols(proj, qw + kw, qw + 2 * kw);
  Tensor mixed = attention_core(q, k, v, cache.k, cache.v, config_.q_heads, config_.kv_heads,
                                config_.head_dim);
  cache.k.insert(cache.k.end(), k.data().begin(), k.data().end());
  cache.v.insert(cache.v.end(), v.data().begin(), v.data().end());
  return out_proj_.forward(mixed, ctx);
}

Tensor AttentionLayer::step(const Tensor& x, KvCache& cache, const ForwardContext& ctx) const {
  if (x.rank() != 2 || x.dim(0) != 1) {
    throw DimensionError("attention step expects a single row, got " + shape_str(x.shape()));
  }
  return extend(x, cache, ctx);
}

void AttentionLayer::append_parameters(const std::string& prefix, ParameterList& out) const {
  qkv_.append_parameters(prefix + ".qkv", out);
  out_proj_.append_parameters(prefix + ".out_proj", out);
}

}  // namespace nf
