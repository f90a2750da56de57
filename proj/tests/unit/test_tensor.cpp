// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/grad_check.hpp"
#include "nf/ops.hpp"
#include "nf/rng.hpp"

namespace nf {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, float scale = 1.0f) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (float& v : t.mutable_data()) v = static_cast<float>(rng.normal()) * scale;
  return t;
}

TEST(Matmul, SmallExample) {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(std::vector<float>(c.data().begin(), c.data().end()),
            (std::vector<float>{19, 22, 43, 50}));
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Matmul, MatchesTripleLoopBitwise) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::size_t m = 3 + seed, k = 17 + 3 * seed, n = 5 + 2 * seed;
    Tensor a = random_tensor({m, k}, seed);
    Tensor b = random_tensor({k, n}, seed + 100);
    Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
        ASSERT_EQ(c[i * n + j], acc) << i << "," << j;
      }
    }
  }
}

TEST(Softmax, UniformRow) {
  Tensor y = softmax(Tensor({1, 3}, {1, 1, 1}), 1);
  for (float v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tensor y = softmax(Tensor({1, 2}, {1000, 0}), 1);
  EXPECT_NEAR(y[0], 1.0, 1e-7);
  EXPECT_NEAR(y[1], std::exp(-1000.0), 1e-30);
}

TEST(Softmax, NonFiniteInputThrows) {
  EXPECT_THROW(softmax(Tensor({1, 2}, {NAN, 0}), 1), NumericInputError);
  EXPECT_THROW(softmax(Tensor({1, 2}, {INFINITY, 0}), 1), NumericInputError);
}

TEST(Softmax, MatchesDoubleOracleAndSumsToOne) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> spread(0.1, 60.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 13;
    Tensor x = random_tensor({3, n}, 1000 + trial, static_cast<float>(spread(gen)));
    Tensor y = softmax(x, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      double mx = -1e300;
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, double(x[r * n + i]));
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += std::exp(double(x[r * n + i]) - mx);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double expect = std::exp(double(x[r * n + i]) - mx) / z;
        EXPECT_NEAR(y[r * n + i], expect, 1e-6);
        total += y[r * n + i];
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Softmax, AlongLeadingAxis) {
  Tensor x = random_tensor({4, 3}, 11);
  Tensor y = softmax(x, 0);
  for (std::size_t c = 0; c < 3; ++c) {
    double total = 0.0;
    for (std::size_t r = 0; r < 4; ++r) total += y[r * 3 + c];
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Silu, KnownValues) {
  Tensor y = silu(Tensor({2}, {0.0f, 1.0f}));
  EXPECT_EQ(y[0], 0.0f);
  EXPECT_NEAR(y[1], 1.0 / (1.0 + std::exp(-1.0)), 1e-7);
  EXPECT_NEAR(y[1], 0.7310586, 1e-6);
}

TEST(RmsNorm, Examples) {
  Tensor ones({1, 4}, {1, 1, 1, 1});
  Tensor w = Tensor::filled({4}, 1.0f);
  Tensor y = rms_norm(ones, w, 0.0f);
  for (float v : y.data()) EXPECT_EQ(v, 1.0f);
  Tensor z = rms_norm(Tensor({1, 4}), w, 1e-6f);
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
}

TEST(CrossEntropy, UniformLogitsGiveLogVocab) {
  const std::vector<TokenId> targets = {2};
  Tensor loss = cross_entropy(Tensor({1, 4}), targets);
  EXPECT_NEAR(loss.item(), std::log(4.0), 1e-6);
}

TEST(CrossEntropy, OutOfRangeTargetThrows) {
  const std::vector<TokenId> bad = {4};
  EXPECT_THROW(cross_entropy(Tensor({1, 4}), bad), IndexError);
  const std::vector<TokenId> neg = {-1};
  EXPECT_THROW(cross_entropy(Tensor({1, 4}), neg), IndexError);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = random_tensor({3, 4}, 3);
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = sum(x);
  backward(tape, loss);
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, ProductRule) {
  Tensor x = Tensor::scalar(2.0f, true);
  Tensor y = Tensor::scalar(3.0f, true);
  Tape tape;
  TapeScope scope(tape);
  backward(tape, mul(x, y));
  EXPECT_EQ(x.grad()[0], 3.0f);
  EXPECT_EQ(y.grad()[0], 2.0f);
}

TEST(Backward, FanOutAccumulates) {
  Tensor x = Tensor::scalar(5.0f, true);
  Tape tape;
  TapeScope scope(tape);
  backward(tape, add(x, x));
  EXPECT_EQ(x.grad()[0], 2.0f);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = random_tensor({2, 2}, 4);
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  Tensor y = scale(x, 2.0f);
  EXPECT_THROW(backward(tape, y), ContractError);
}

TEST(Backward, NoRecordingOutsideTape) {
  Tensor x = Tensor::scalar(1.0f, true);
  Tape tape;
  {
    NoGradScope off;
    Tensor y = mul(x, x);
    EXPECT_FALSE(tape.produced(y));
  }
  EXPECT_EQ(tape.size(), 0u);
}

TEST(GradCheck, SumOfSquares) {
  Tensor x = random_tensor({4, 5}, 21);
  auto f = [&]() { return sum(mul(x, x)); };
  EXPECT_LT(grad_check(f, x), 1e-4);
}

TEST(GradCheck, ConstantFunction) {
  Tensor x = random_tensor({3}, 22);
  auto f = []() { return Tensor::scalar(7.0f); };
  EXPECT_EQ(grad_check(f, x), 0.0);
}

TEST(GradCheck, TwoLayerMlpCrossEntropy) {
  Tensor x = random_tensor({6, 8}, 30);
  Tensor w1 = random_tensor({8, 16}, 31, 0.3f);
  Tensor b1 = random_tensor({16}, 32, 0.1f);
  Tensor w2 = random_tensor({16, 5}, 33, 0.3f);
  const std::vector<TokenId> targets = {0, 1, 2, 3, 4, 0};
  auto f = [&]() {
    Tensor h = silu(add_bias(matmul(x, w1), b1));
    return cross_entropy(matmul(h, w2), targets);
  };
  EXPECT_LT(grad_check(f, w1), 1e-3);
  EXPECT_LT(grad_check(f, b1), 1e-3);
  EXPECT_LT(grad_check(f, w2), 1e-3);
  EXPECT_LT(grad_check(f, x), 1e-3);
}

// Weighted sum so every output coordinate gets a distinct upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  return sum(mul(y, random_tensor(y.shape(), seed)));
}

TEST(GradCheck, ElementwiseAndStructuralOps) {
  Tensor a = random_tensor({4, 6}, 40);
  Tensor b = random_tensor({4, 6}, 41);
  Tensor w = random_tensor({6}, 42);
  Tensor s = random_tensor({4}, 43);
  const std::vector<std::size_t> rows = {3, 0, 3, 1};
  const std::vector<std::size_t> cols = {0, 5, 2, 2, 1, 4, 3, 3};
  const std::vector<std::size_t> flat = {0, 7, 7, 23};
  const std::vector<TokenId> ids = {1, 3, 1};
  std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
      {"sub", [&] { return probe(sub(a, b), 1); }},
      {"sigmoid", [&] { return probe(sigmoid(a), 2); }},
      {"exp", [&] { return probe(exp(a), 16); }},
      {"silu", [&] { return probe(silu(a), 3); }},
      {"softmax1", [&] { return probe(softmax(a, 1), 4); }},
      {"softmax0", [&] { return probe(softmax(a, 0), 5); }},
      {"rms_norm", [&] { return probe(rms_norm(a, w, 1e-5f), 6); }},
      {"scale_rows", [&] { return probe(scale_rows(a, s), 7); }},
      {"transpose", [&] { return probe(transpose(a), 8); }},
      {"reshape", [&] { return probe(reshape(a, {6, 4}), 9); }},
      {"slice_concat",
       [&] { return probe(concat_cols({slice_cols(a, 1, 4), slice_cols(a, 0, 2)}), 10); }},
      {"gather_rows", [&] { return probe(gather_rows(a, rows), 11); }},
      {"gather_cols", [&] { return probe(gather_cols(a, cols, 2), 12); }},
      {"gather_elements", [&] { return probe(gather_elements(a, flat), 13); }},
      {"embedding", [&] { return probe(embedding(a, ids), 14); }},
      {"mean", [&] { return mean(mul(a, b)); }},
      {"index_add",
       [&] {
         return probe(index_add_rows(5, 6, {{{0, 4}, gather_rows(a, {{1, 2}})},
                                            {{4, 4, 2}, gather_rows(a, {{0, 3, 3}})}}),
                      15);
       }},
  };
  for (auto& [name, f] : cases) {
    EXPECT_LT(grad_check(f, a), 1e-3) << name;
  }
  EXPECT_LT(grad_check([&] { return probe(rms_norm(a, w, 1e-5f), 6); }, w), 1e-3);
  EXPECT_LT(grad_check([&] { return probe(scale_rows(a, s), 7); }, s), 1e-3);
}

}  // namespace
}  // namespace nf
