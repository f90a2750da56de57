// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/grad_check.hpp"
#include "nf/layers/attention.hpp"
#include "nf/layers/linear.hpp"
#include "nf/layers/mamba2.hpp"
#include "nf/layers/ssm_ops.hpp"
#include "nf/ops.hpp"
#include "nf/quant/qgemm.hpp"
#include "test_support.hpp"

namespace nf {
namespace {

using testing::max_abs_diff;
using testing::probe;
using testing::random_tensor;

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t[i * t.dim(1) + j];
  }
  return m;
}

Matrix matmul_oracle(const Matrix& a, const Tensor& w) {
  const std::size_t n = w.dim(1);
  Matrix out(a.size(), std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t p = 0; p < a[i].size(); ++p) {
      for (std::size_t j = 0; j < n; ++j) out[i][j] += a[i][p] * w[p * n + j];
    }
  }
  return out;
}

double silu_d(double v) { return v / (1.0 + std::exp(-v)); }

Mamba2Config small_mamba() {
  Mamba2Config c;
  c.d_model = 8;
  c.heads = 2;
  c.head_dim = 4;
  c.state_dim = 4;
  return c;
}

AttentionConfig small_attention() {
  AttentionConfig c;
  c.d_model = 8;
  c.q_heads = 4;
  c.kv_heads = 2;
  c.head_dim = 4;
  return c;
}

// Randomizes the parameters that initialize to constants so every path of
// the layer is exercised.
void perturb_mamba(Mamba2Layer& layer, std::uint64_t seed) {
  Rng rng(seed);
  for (Tensor* t : {&layer.conv_bias(), &layer.d_skip()}) {
    for (float& v : t->mutable_data()) v = static_cast<float>(rng.normal(0.0, 0.5));
  }
}

// Direct evaluation of the Mamba-2 layer in double, materializing h_t from
// the closed form h_t = Σ_{s≤t} (Π_{s<r≤t} a_r) · dt_s · B_s ⊗ x_s.
Matrix mamba_oracle(Mamba2Layer& layer, const Tensor& u) {
  const Mamba2Config& cfg = layer.config();
  const std::size_t steps = u.dim(0), di = cfg.inner(), n = cfg.state_dim;
  const std::size_t ch = cfg.conv_channels(), heads = cfg.heads, p = cfg.head_dim;
  const std::size_t width = cfg.conv_width;
  Matrix proj = matmul_oracle(to_matrix(u), layer.in_proj().weight());
  Matrix xbc(steps, std::vector<double>(ch));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      double acc = layer.conv_bias()[c];
      for (std::size_t k = 0; k < width; ++k) {
        const std::ptrdiff_t src = std::ptrdiff_t(t + k) - std::ptrdiff_t(width - 1);
        if (src >= 0) acc += layer.conv_weight()[k * ch + c] * proj[src][di + c];
      }
      xbc[t][c] = silu_d(acc);
    }
  }
  Matrix dt(steps, std::vector<double>(heads)), decay = dt;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t h = 0; h < heads; ++h) {
      const double raw = proj[t][di + ch + h] + layer.dt_bias()[h];
      dt[t][h] = std::clamp(std::log1p(std::exp(raw)), double(cfg.dt_min), double(cfg.dt_max));
      decay[t][h] = std::exp(-dt[t][h] * std::exp(double(layer.a_log()[h])));
    }
  }
  Matrix gated(steps, std::vector<double>(di));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t q = 0; q < p; ++q) {
        const std::size_t c = h * p + q;
        double y = layer.d_skip()[h] * xbc[t][c];
        for (std::size_t s = 0; s < n; ++s) {
          double state = 0.0;
          for (std::size_t src = 0; src <= t; ++src) {
            double prod = 1.0;
            for (std::size_t r = src + 1; r <= t; ++r) prod *= decay[r][h];
            state += prod * dt[src][h] * xbc[src][di + s] * xbc[src][c];
          }
          y += xbc[t][di + n + s] * state;
        }
        gated[t][c] = y * silu_d(proj[t][c]);
      }
    }
  }
  return matmul_oracle(gated, layer.out_proj().weight());
}

// Per-position softmax-weighted sum over visible keys, in double.
Matrix attention_oracle(const AttentionLayer& layer, const Tensor& x) {
  const AttentionConfig& cfg = layer.config();
  const std::size_t hd = cfg.head_dim, qw = cfg.q_heads * hd, kw = cfg.kv_width();
  Matrix proj = matmul_oracle(to_matrix(x), layer.qkv().weight());
  Matrix mixed(x.dim(0), std::vector<double>(qw, 0.0));
  for (std::size_t t = 0; t < x.dim(0); ++t) {
    for (std::size_t h = 0; h < cfg.q_heads; ++h) {
      const std::size_t g = h / (cfg.q_heads / cfg.kv_heads);
      std::vector<double> w(t + 1);
      double z = 0.0;
      for (std::size_t j = 0; j <= t; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < hd; ++i) s += proj[t][h * hd + i] * proj[j][qw + g * hd + i];
        w[j] = std::exp(s / std::sqrt(double(hd)));
        z += w[j];
      }
      for (std::size_t j = 0; j <= t; ++j) {
        for (std::size_t i = 0; i < hd; ++i) {
          mixed[t][h * hd + i] += w[j] / z * proj[j][qw + kw + g * hd + i];
        }
      }
    }
  }
  return matmul_oracle(mixed, layer.out_proj().weight());
}

double max_abs_diff(const Tensor& y, const Matrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m[i].size(); ++j) {
      worst = std::max(worst, std::abs(y[i * m[i].size() + j] - m[i][j]));
    }
  }
  return worst;
}

Tensor row(const Tensor& x, std::size_t t) {
  const std::vector<std::size_t> idx = {t};
  return gather_rows(x, idx);
}

const ForwardContext kRef{false, 0};

TEST(SsmScan, PureAccumulation) {
  const std::size_t steps = 10;
  const float c = 0.75f;
  Tensor x = Tensor::filled({steps, 1}, c);
  Tensor dt = Tensor::filled({steps, 1}, 1.0f);
  Tensor ones = Tensor::filled({steps, 1}, 1.0f);
  const std::vector<float> h0 = {0.0f};
  ScanResult r = ssm_scan(x, dt, Tensor({1}), ones, ones, Tensor({1}), h0);
  for (std::size_t t = 0; t < steps; ++t) EXPECT_FLOAT_EQ(r.y[t], (t + 1) * c);
  EXPECT_FLOAT_EQ(r.state[0], steps * c);
}

TEST(SsmScan, StateSizeMismatchThrows) {
  Tensor one = Tensor::filled({1, 1}, 1.0f);
  const std::vector<float> h0 = {0.0f, 0.0f};
  EXPECT_THROW(ssm_scan(one, one, Tensor({1}), one, one, Tensor({1}), h0), ContractError);
}

TEST(SoftplusClamp, StaysInRangeAndDecayBounded) {
  Tensor u = random_tensor({64}, 5, 8.0f);
  Tensor dt = softplus_clamp(u, 1e-4f, 10.0f);
  for (std::size_t i = 0; i < dt.numel(); ++i) {
    EXPECT_GE(dt[i], 1e-4f);
    EXPECT_LE(dt[i], 10.0f);
    for (double a : {-1e-3, -0.5, -16.0}) {
      const double decay = std::exp(dt[i] * a);
      EXPECT_GT(decay, 0.0);
      EXPECT_LT(decay, 1.0);
    }
  }
}

TEST(Mamba2, MatchesClosedFormOracle) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    Mamba2Layer layer(small_mamba(), rng, 0.3);
    perturb_mamba(layer, seed + 50);
    Tensor u = random_tensor({12, 8}, seed + 100);
    Tensor y = layer.forward(u, kRef);
    EXPECT_LT(max_abs_diff(y, mamba_oracle(layer, u)), 1e-5) << seed;
  }
}

TEST(Mamba2, MemorylessLimitSeesOnlyConvWindow) {
  Rng rng(9);
  Mamba2Layer layer(small_mamba(), rng, 0.3);
  for (float& v : layer.a_log().mutable_data()) v = 50.0f;  // A = −e^50, a_t = 0
  const std::size_t steps = 12, width = layer.config().conv_width;
  Tensor u = random_tensor({steps, 8}, 10);
  Tensor base = layer.forward(u, kRef);
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor v = u.clone();
    for (std::size_t j = 0; j < 8; ++j) v.mutable_data()[s * 8 + j] += 1.0f;
    Tensor y = layer.forward(v, kRef);
    for (std::size_t t = 0; t < steps; ++t) {
      const bool in_window = t >= s && t < s + width;
      double diff = 0.0;
      for (std::size_t j = 0; j < 8; ++j) diff = std::max(diff, double(std::abs(y[t * 8 + j] - base[t * 8 + j])));
      if (in_window) {
        EXPECT_GT(diff, 0.0) << "s=" << s << " t=" << t;
      } else {
        EXPECT_EQ(diff, 0.0) << "s=" << s << " t=" << t;
      }
    }
  }
}

TEST(Mamba2, StepMatchesForward) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Mamba2Layer layer(small_mamba(), rng, 0.3);
    perturb_mamba(layer, seed + 7);
    const std::size_t steps = 1 + (seed * 37) % 64;
    Tensor u = random_tensor({steps, 8}, seed + 1000);
    Tensor full = layer.forward(u, kRef);
    MambaState state = layer.initial_state();
    double worst = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor y = layer.step(row(u, t), state, kRef);
      worst = std::max(worst, max_abs_diff(y, row(full, t)));
    }
    EXPECT_LT(worst, 1e-4) << seed;
    EXPECT_EQ(state.tokens, steps);
  }
}

TEST(Mamba2, ChunkedExtendMatchesForward) {
  Rng rng(3);
  Mamba2Layer layer(small_mamba(), rng, 0.3);
  Tensor u = random_tensor({20, 8}, 4);
  Tensor full = layer.forward(u, kRef);
  MambaState s2 = layer.initial_state();
  std::vector<std::size_t> first(7), rest(13);
  for (std::size_t i = 0; i < 7; ++i) first[i] = i;
  for (std::size_t i = 0; i < 13; ++i) rest[i] = 7 + i;
  Tensor a = layer.extend(gather_rows(u, first), s2, kRef);
  Tensor b = layer.extend(gather_rows(u, rest), s2, kRef);
  EXPECT_EQ(max_abs_diff(a, gather_rows(full, first)), 0.0);
  EXPECT_EQ(max_abs_diff(b, gather_rows(full, rest)), 0.0);
}

TEST(Mamba2, StateSizeIsConstant) {
  Rng rng(1);
  Mamba2Layer layer(small_mamba(), rng, 0.3);
  MambaState state = layer.initial_state();
  layer.step(random_tensor({1, 8}, 2), state, kRef);
  const std::size_t after_one = state.bytes();
  for (int i = 1; i < 1000; ++i) layer.step(random_tensor({1, 8}, 3 + i), state, kRef);
  EXPECT_EQ(state.bytes(), after_one);
  EXPECT_EQ(state.tokens, 1000u);
}

TEST(Mamba2, ZeroInputOnZeroStateGivesZero) {
  Rng rng(2);
  Mamba2Layer layer(small_mamba(), rng, 0.3);
  MambaState state = layer.initial_state();
  Tensor y = layer.step(Tensor({1, 8}), state, kRef);
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Mamba2, ForeignStateThrows) {
  Rng rng(2);
  Mamba2Layer layer(small_mamba(), rng, 0.3);
  Mamba2Config other = small_mamba();
  other.state_dim = 8;
  Mamba2Layer wider(other, rng, 0.3);
  MambaState state = wider.initial_state();
  EXPECT_THROW(layer.step(Tensor({1, 8}), state, kRef), ContractError);
}

TEST(Attention, SingleTokenIsValuePath) {
  Rng rng(4);
  AttentionLayer layer(small_attention(), rng, 0.3);
  Tensor x = random_tensor({1, 8}, 5);
  Tensor y = layer.forward(x, kRef);
  // With one position the weight is 1, so head h outputs V of its KV head.
  const AttentionConfig& cfg = layer.config();
  const std::size_t hd = cfg.head_dim, qw = cfg.q_heads * hd, kw = cfg.kv_width();
  Matrix proj = matmul_oracle(to_matrix(x), layer.qkv().weight());
  Matrix mixed(1, std::vector<double>(qw));
  for (std::size_t h = 0; h < cfg.q_heads; ++h) {
    for (std::size_t i = 0; i < hd; ++i) mixed[0][h * hd + i] = proj[0][qw + kw + (h / 2) * hd + i];
  }
  EXPECT_LT(max_abs_diff(y, matmul_oracle(mixed, layer.out_proj().weight())), 1e-6);
}

TEST(Attention, IdenticalTokensGiveIdenticalOutputs) {
  Rng rng(6);
  AttentionLayer layer(small_attention(), rng, 0.3);
  Tensor tok = random_tensor({1, 8}, 7);
  std::vector<std::size_t> same(10, 0);
  Tensor y = layer.forward(gather_rows(tok, same), kRef);
  for (std::size_t t = 1; t < 10; ++t) {
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(y[t * 8 + j], y[j], 1e-6);
  }
}

TEST(Attention, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    AttentionLayer layer(small_attention(), rng, 0.4);
    Tensor x = random_tensor({8, 8}, seed + 20);
    EXPECT_LT(max_abs_diff(layer.forward(x, kRef), attention_oracle(layer, x)), 1e-5);
  }
}

TEST(Attention, StepMatchesForwardAndCacheGrows) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    AttentionLayer layer(small_attention(), rng, 0.4);
    const std::size_t steps = 1 + (seed * 29) % 64;
    Tensor x = random_tensor({steps, 8}, seed + 500);
    Tensor full = layer.forward(x, kRef);
    KvCache cache = layer.empty_cache();
    double worst = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor y = layer.step(row(x, t), cache, kRef);
      ASSERT_EQ(cache.length(), t + 1);
      worst = std::max(worst, max_abs_diff(y, row(full, t)));
    }
    EXPECT_LT(worst, 1e-4) << seed;
  }
}

TEST(Attention, EmptyCacheStepEqualsSingleTokenForward) {
  Rng rng(8);
  AttentionLayer layer(small_attention(), rng, 0.4);
  Tensor x = random_tensor({1, 8}, 9);
  KvCache cache = layer.empty_cache();
  EXPECT_EQ(max_abs_diff(layer.step(x, cache, kRef), layer.forward(x, kRef)), 0.0);
}

TEST(Attention, UngroupableHeadsRejected) {
  AttentionConfig c = small_attention();
  c.q_heads = 3;
  Rng rng(1);
  EXPECT_THROW(AttentionLayer(c, rng, 0.1), ConfigError);
}

TEST(Layers, CausalityIsExact) {
  Rng rng(11);
  Mamba2Layer mamba(small_mamba(), rng, 0.3);
  AttentionLayer attn(small_attention(), rng, 0.3);
  const std::size_t steps = 9;
  Tensor u = random_tensor({steps, 8}, 12);
  Tensor bm = mamba.forward(u, kRef), ba = attn.forward(u, kRef);
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor v = u.clone();
    v.mutable_data()[s * 8 + s % 8] += 3.0f;
    Tensor ym = mamba.forward(v, kRef), ya = attn.forward(v, kRef);
    for (std::size_t i = 0; i < s * 8; ++i) {
      ASSERT_EQ(ym[i], bm[i]);
      ASSERT_EQ(ya[i], ba[i]);
    }
  }
}

TEST(StateBytes, MambaConstantKvLinear) {
  Rng rng(1);
  Mamba2Layer layer(small_mamba(), rng, 0.3);
  MambaState s = layer.initial_state();
  const std::size_t before = s.bytes();
  for (int i = 0; i < 10; ++i) layer.step(random_tensor({1, 8}, i), s, kRef);
  EXPECT_EQ(s.bytes(), before);

  AttentionConfig toy;
  toy.kv_heads = 2;
  toy.head_dim = 32;
  EXPECT_EQ(kv_cache_bytes(toy, 1), 512u);
  EXPECT_EQ(kv_cache_bytes(toy, 1000), 10 * kv_cache_bytes(toy, 100));

  AttentionLayer attn(small_attention(), rng, 0.3);
  KvCache cache = attn.empty_cache();
  for (std::size_t t = 1; t <= 5; ++t) {
    attn.step(random_tensor({1, 8}, 40 + t), cache, kRef);
    EXPECT_EQ(cache.bytes(), kv_cache_bytes(attn.config(), t));
  }
}

TEST(GradCheck, Mamba2Layer) {
  Rng rng(21);
  Mamba2Layer layer(small_mamba(), rng, 0.4);
  perturb_mamba(layer, 22);
  Tensor u = random_tensor({6, 8}, 23);
  auto f = [&] { return probe(layer.forward(u, kRef), 24); };
  EXPECT_LT(grad_check(f, u), 1e-3);
  ParameterList params;
  layer.append_parameters("m", params);
  ASSERT_EQ(params.size(), 7u);
  for (auto& p : params) EXPECT_LT(grad_check(f, p.tensor), 1e-3) << p.name;
}

TEST(GradCheck, AttentionLayer) {
  Rng rng(31);
  AttentionLayer layer(small_attention(), rng, 0.4);
  Tensor x = random_tensor({6, 8}, 32);
  auto f = [&] { return probe(layer.forward(x, kRef), 33); };
  EXPECT_LT(grad_check(f, x), 1e-3);
  ParameterList params;
  layer.append_parameters("a", params);
  for (auto& p : params) EXPECT_LT(grad_check(f, p.tensor), 1e-3) << p.name;
}

TEST(GradCheck, ExtendWithCachedPrefix) {
  Rng rng(41);
  AttentionLayer attn(small_attention(), rng, 0.4);
  Mamba2Layer mamba(small_mamba(), rng, 0.4);
  Tensor prefix = random_tensor({3, 8}, 42);
  Tensor x = random_tensor({4, 8}, 43);
  auto fa = [&] {
    KvCache cache = attn.empty_cache();
    attn.extend(prefix, cache, kRef);
    return probe(attn.extend(x, cache, kRef), 44);
  };
  auto fm = [&] {
    MambaState state = mamba.initial_state();
    mamba.extend(prefix, state, kRef);
    return probe(mamba.extend(x, state, kRef), 45);
  };
  EXPECT_LT(grad_check(fa, x), 1e-3);
  EXPECT_LT(grad_check(fm, x), 1e-3);
}

TEST(QuantizedMatmul, ReferenceFormatIsPlainMatmul) {
  Tensor x = random_tensor({5, 32}, 1), w = random_tensor({32, 6}, 2);
  EXPECT_EQ(max_abs_diff(quantized_matmul(x, w, quant::Format::kReference, 0), matmul(x, w)), 0.0);
}

TEST(QuantizedMatmul, ForwardUsesQuantizedOperands) {
  Tensor x = random_tensor({5, 32}, 1), w = random_tensor({32, 6}, 2);
  quant::QgemmOptions opts;
  opts.a = {quant::Format::kNvfp4, quant::BlockLayout::k1d16, quant::RoundingMode::nearest_even()};
  opts.b = {quant::Format::kNvfp4, quant::BlockLayout::k2d16x16,
            quant::RoundingMode::nearest_even()};
  Tensor expect = quant::qgemm_sim(x, w, opts);
  EXPECT_EQ(max_abs_diff(quantized_matmul(x, w, quant::Format::kNvfp4, 3), expect), 0.0);
}

TEST(QuantizedMatmul, TiledWeightQuantizationCommutesWithTranspose) {
  for (quant::Format f : {quant::Format::kNvfp4, quant::Format::kMxfp8}) {
    Tensor w = random_tensor({37, 21}, 6);
    EXPECT_EQ(max_abs_diff(transpose(quantize_weight(w, f)), quantize_weight(transpose(w), f)),
              0.0);
  }
}

TEST(Linear, CachedWeightTracksUpdates) {
  Rng rng(7);
  Linear lin(32, 16, quant::LinearKind::kMambaInProjection, rng, 0.5);
  lin.set_format(quant::Format::kNvfp4);
  Tensor x = random_tensor({4, 32}, 8);
  const ForwardContext ctx{true, 1};
  Tensor before = lin.forward(x, ctx);
  Tensor w = lin.weight();
  for (float& v : w.mutable_data()) v *= 2.0f;
  Tensor after = lin.forward(x, ctx);
  EXPECT_EQ(max_abs_diff(after, quantized_matmul(x, w, quant::Format::kNvfp4, 0)), 0.0);
  EXPECT_GT(max_abs_diff(after, before), 0.0);
}

// Straight-through gradients stay close to the exact ones and are a
// deterministic function of the seed.
TEST(QuantizedMatmul, GradientsTrackReferenceAndAreSeeded) {
  for (quant::Format f : {quant::Format::kNvfp4, quant::Format::kMxfp8}) {
    Tensor x = random_tensor({32, 48}, 3);
    Tensor w = random_tensor({48, 16}, 4);
    Tensor dy = random_tensor({32, 16}, 5);
    auto grads = [&](quant::Format fmt, std::uint64_t seed) {
      Tensor xi = x.clone().set_requires_grad(true);
      Tensor wi = w.clone().set_requires_grad(true);
      Tape tape;
      TapeScope scope(tape);
      backward(tape, sum(mul(quantized_matmul(xi, wi, fmt, seed), dy)));
      return std::pair{Tensor(x.shape(), {xi.grad().begin(), xi.grad().end()}),
                       Tensor(w.shape(), {wi.grad().begin(), wi.grad().end()})};
    };
    auto [rx, rw] = grads(quant::Format::kReference, 0);
    auto [qx, qw] = grads(f, 9);
    auto [qx2, qw2] = grads(f, 9);
    EXPECT_EQ(max_abs_diff(qx, qx2), 0.0);
    EXPECT_EQ(max_abs_diff(qw, qw2), 0.0);
    auto rel = [](const Tensor& a, const Tensor& b) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < a.numel(); ++i) {
        num += std::pow(double(a[i]) - b[i], 2);
        den += std::pow(double(b[i]), 2);
      }
      return std::sqrt(num / den);
    };
    const double bound = f == quant::Format::kNvfp4 ? 0.3 : 0.1;
    EXPECT_LT(rel(qx, rx), bound);
    EXPECT_LT(rel(qw, rw), bound);
    EXPECT_GT(rel(qw, rw), 0.0);
  }
}

}  // namespace
}  // namespace nf
