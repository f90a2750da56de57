// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/ops.hpp"

#include <algorithm>
#include <cmath>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/kernel_util.hpp"

namespace nf {

using detail::View;

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a 2-D tensor, got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

void require_finite(const Tensor& t, const char* op) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericInputError(std::string(op) + ": non-finite input");
    }
  }
}

// Gradient buffer of a node output; always allocated when its backward rule
// runs.
std::span<const float> out_grad(const Tensor& out) { return out.grad(); }

template <typename T>
T sigmoid_of(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> av(a), bv(b);
    kernels::gemm(av.ptr(), bv.ptr(), o.data(), m, k, n);
  });
  if (autodiff::should_record({&a, &b})) {
    autodiff::record({a, b}, out, [a, b, out, m, k, n]() {
      auto g = out_grad(out);
      if (a.requires_grad()) {
        std::vector<float> bt(k * n), da(m * k);
        kernels::transpose(b.data().data(), bt.data(), k, n);
        kernels::gemm(g.data(), bt.data(), da.data(), m, n, k);
        autodiff::accumulate(a, da);
      }
      if (b.requires_grad()) {
        std::vector<float> at(m * k), db(k * n);
        kernels::transpose(a.data().data(), at.data(), m, k);
        kernels::gemm(at.data(), g.data(), db.data(), k, m, n);
        autodiff::accumulate(b, db);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> av(a);
    kernels::transpose(av.ptr(), o.data(), m, n);
  });
  if (autodiff::should_record({&a})) {
    autodiff::record({a}, out, [a, out, m, n]() {
      std::vector<float> da(m * n);
      kernels::transpose(out_grad(out).data(), da.data(), n, m);
      autodiff::accumulate(a, da);
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("cannot reshape " + shape_str(a.shape()) + " to " +
                         shape_str(shape));
  }
  Tensor out(std::move(shape));
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> av(a);
    std::copy(av.span().begin(), av.span().end(), o.begin());
  });
  if (autodiff::should_record({&a})) {
    autodiff::record({a}, out, [a, out]() { autodiff::accumulate(a, out_grad(out)); });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> av(a), bv(b);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  });
  if (autodiff::should_record({&a, &b})) {
    autodiff::record({a, b}, out, [a, b, out]() {
      autodiff::accumulate(a, out_grad(out));
      autodiff::accumulate(b, out_grad(out));
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> av(a), bv(b);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  });
  if (autodiff::should_record({&a, &b})) {
    autodiff::record({a, b}, out, [a, b, out]() {
      autodiff::accumulate(a, out_grad(out));
      if (b.requires_grad()) {
        std::vector<float> neg(out_grad(out).begin(), out_grad(out).end());
        for (float& v : neg) v = -v;
        autodiff::accumulate(b, neg);
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> av(a), bv(b);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  });
  if (autodiff::should_record({&a, &b})) {
    autodiff::record({a, b}, out, [a, b, out]() {
      auto g = out_grad(out);
      std::vector<float> d(g.size());
      if (a.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * b[i];
        autodiff::accumulate(a, d);
      }
      if (b.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * a[i];
        autodiff::accumulate(b, d);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, float factor) {
  Tensor out(a.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> av(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * T(factor);
  });
  if (autodiff::should_record({&a})) {
    autodiff::record({a}, out, [a, out, factor]() {
      auto g = out_grad(out);
      std::vector<float> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * factor;
      autodiff::accumulate(a, d);
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t r = x.rows(), c = x.cols();
  if (bias.numel() != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match trailing dim of " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x), bv(bias);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) o[i * c + j] = xv[i * c + j] + bv[j];
    }
  });
  if (autodiff::should_record({&x, &bias})) {
    autodiff::record({x, bias}, out, [x, bias, out, r, c]() {
      auto g = out_grad(out);
      autodiff::accumulate(x, g);
      if (bias.requires_grad()) {
        std::vector<double> acc(c, 0.0);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) acc[j] += g[i * c + j];
        }
        std::vector<float> db(acc.begin(), acc.end());
        autodiff::accumulate(bias, db);
      }
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  const std::size_t r = x.rows(), c = x.cols();
  if (s.numel() != r) {
    throw DimensionError("scale_rows: " + shape_str(s.shape()) + " scales for " +
                         shape_str(x.shape()));
  }
  Tensor out(x.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x), sv(s);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) o[i * c + j] = xv[i * c + j] * sv[i];
    }
  });
  if (autodiff::should_record({&x, &s})) {
    autodiff::record({x, s}, out, [x, s, out, r, c]() {
      auto g = out_grad(out);
      if (x.requires_grad()) {
        std::vector<float> dx(r * c);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) dx[i * c + j] = g[i * c + j] * s[i];
        }
        autodiff::accumulate(x, dx);
      }
      if (s.requires_grad()) {
        std::vector<float> ds(r);
        for (std::size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += double(g[i * c + j]) * x[i * c + j];
          ds[i] = static_cast<float>(acc);
        }
        autodiff::accumulate(s, ds);
      }
    });
  }
  return out;
}

Tensor silu(const Tensor& x) {
  Tensor out(x.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * sigmoid_of(xv[i]);
  });
  if (autodiff::should_record({&x})) {
    autodiff::record({x}, out, [x, out]() {
      auto g = out_grad(out);
      std::vector<float> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const float sg = sigmoid_of(x[i]);
        d[i] = g[i] * sg * (1.0f + x[i] * (1.0f - sg));
      }
      autodiff::accumulate(x, d);
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = sigmoid_of(xv[i]);
  });
  if (autodiff::should_record({&x})) {
    autodiff::record({x}, out, [x, out]() {
      auto g = out_grad(out);
      std::vector<float> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * out[i] * (1.0f - out[i]);
      autodiff::accumulate(x, d);
    });
  }
  return out;
}

Tensor exp(const Tensor& x) {
  Tensor out(x.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(xv[i]);
  });
  if (autodiff::should_record({&x})) {
    autodiff::record({x}, out, [x, out]() {
      auto g = out_grad(out);
      std::vector<float> d(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * out[i];
      autodiff::accumulate(x, d);
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
  }
  require_finite(x, "softmax");
  const Shape& sh = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
  for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
  const std::size_t n = sh[axis];
  Tensor out(sh);
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t b = 0; b < inner; ++b) {
        const std::size_t base = a * n * inner + b;
        T mx = xv[base];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xv[base + i * inner]);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const T e = std::exp(xv[base + i * inner] - mx);
          o[base + i * inner] = e;
          total += e;
        }
        for (std::size_t i = 0; i < n; ++i) {
          o[base + i * inner] = static_cast<T>(o[base + i * inner] / total);
        }
      }
    }
  });
  if (autodiff::should_record({&x})) {
    autodiff::record({x}, out, [x, out, outer, inner, n]() {
      auto g = out_grad(out);
      std::vector<float> d(g.size());
      for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t b = 0; b < inner; ++b) {
          const std::size_t base = a * n * inner + b;
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            dot += double(g[base + i * inner]) * out[base + i * inner];
          }
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = base + i * inner;
            d[idx] = static_cast<float>(double(out[idx]) * (g[idx] - dot));
          }
        }
      }
      autodiff::accumulate(x, d);
    });
  }
  return out;
}

Tensor rms_norm(const Tensor& x, const Tensor& weight, float eps) {
  const std::size_t r = x.rows(), c = x.cols();
  if (weight.numel() != c) {
    throw DimensionError("rms_norm: weight " + shape_str(weight.shape()) +
                         " does not match trailing dim of " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  std::vector<float> inv_rms(r);
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x), wv(weight);
    for (std::size_t i = 0; i < r; ++i) {
      double ss = 0.0;
      for (std::size_t j = 0; j < c; ++j) ss += double(xv[i * c + j]) * xv[i * c + j];
      const T inv = T(1) / std::sqrt(static_cast<T>(ss / double(c)) + T(eps));
      inv_rms[i] = static_cast<float>(inv);
      for (std::size_t j = 0; j < c; ++j) o[i * c + j] = xv[i * c + j] * inv * wv[j];
    }
  });
  if (autodiff::should_record({&x, &weight})) {
    autodiff::record({x, weight}, out, [x, weight, out, r, c, inv_rms]() {
      auto g = out_grad(out);
      if (x.requires_grad()) {
        std::vector<float> dx(r * c);
        for (std::size_t i = 0; i < r; ++i) {
          const double inv = inv_rms[i];
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            dot += double(g[i * c + j]) * weight[j] * x[i * c + j];
          }
          const double k = inv * inv * inv * dot / double(c);
          for (std::size_t j = 0; j < c; ++j) {
            dx[i * c + j] = static_cast<float>(double(g[i * c + j]) * weight[j] * inv -
                                               x[i * c + j] * k);
          }
        }
        autodiff::accumulate(x, dx);
      }
      if (weight.requires_grad()) {
        std::vector<double> acc(c, 0.0);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            acc[j] += double(g[i * c + j]) * x[i * c + j] * inv_rms[i];
          }
        }
        std::vector<float> dw(acc.begin(), acc.end());
        autodiff::accumulate(weight, dw);
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets) {
  require_rank2(logits, "cross_entropy");
  const std::size_t t = logits.dim(0), v = logits.dim(1);
  if (targets.size() != t) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(logits.shape()));
  }
  if (t == 0) throw DimensionError("cross_entropy: empty logits");
  for (TokenId id : targets) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw IndexError("cross_entropy: target id " + std::to_string(id) +
                       " outside vocabulary of " + std::to_string(v));
    }
  }
  std::vector<double> lse(t);
  Tensor out({1});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> lv(logits);
    double total = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      const T* row = lv.ptr() + i * v;
      const double mx = *std::max_element(row, row + v);
      double s = 0.0;
      for (std::size_t j = 0; j < v; ++j) s += std::exp(double(row[j]) - mx);
      lse[i] = mx + std::log(s);
      total += lse[i] - row[targets[i]];
    }
    o[0] = static_cast<T>(total / double(t));
  });
  if (autodiff::should_record({&logits})) {
    std::vector<TokenId> tg(targets.begin(), targets.end());
    autodiff::record({logits}, out, [logits, out, t, v, lse, tg]() {
      const double g = out_grad(out)[0] / double(t);
      std::vector<float> d(t * v);
      for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < v; ++j) {
          double p = std::exp(double(logits[i * v + j]) - lse[i]);
          if (static_cast<TokenId>(j) == tg[i]) p -= 1.0;
          d[i * v + j] = static_cast<float>(p * g);
        }
      }
      autodiff::accumulate(logits, d);
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out({1});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
    o[0] = static_cast<T>(s);
  });
  if (autodiff::should_record({&x})) {
    autodiff::record({x}, out, [x, out]() {
      std::vector<float> d(x.numel(), out_grad(out)[0]);
      autodiff::accumulate(x, d);
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  Tensor out({1});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
    o[0] = static_cast<T>(s / n);
  });
  if (autodiff::should_record({&x})) {
    autodiff::record({x}, out, [x, out, n]() {
      std::vector<float> d(x.numel(), static_cast<float>(out_grad(out)[0] / n));
      autodiff::accumulate(x, d);
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
  require_rank2(table, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }
  Tensor out({ids.size(), d});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> tv(table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::copy_n(tv.ptr() + static_cast<std::size_t>(ids[i]) * d, d, o.begin() + i * d);
    }
  });
  if (autodiff::should_record({&table})) {
    std::vector<TokenId> idv(ids.begin(), ids.end());
    autodiff::record({table}, out, [table, out, idv, d]() {
      auto g = out_grad(out);
      std::vector<float> dt(table.numel(), 0.0f);
      for (std::size_t i = 0; i < idv.size(); ++i) {
        const std::size_t row = static_cast<std::size_t>(idv[i]);
        for (std::size_t j = 0; j < d; ++j) dt[row * d + j] += g[i * d + j];
      }
      autodiff::accumulate(table, dt);
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (begin > end || end > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({r, w});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(xv.ptr() + i * c + begin, w, o.begin() + i * w);
    }
  });
  if (autodiff::should_record({&x})) {
    autodiff::record({x}, out, [x, out, r, c, w, begin]() {
      auto g = out_grad(out);
      std::vector<float> dx(r * c, 0.0f);
      for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(g.begin() + i * w, w, dx.begin() + i * c + begin);
      }
      autodiff::accumulate(x, dx);
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts[0].dim(0);
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.dim(1);
  }
  Tensor out({r, total});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      View<T> pv(p);
      const std::size_t w = p.dim(1);
      for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(pv.ptr() + i * w, w, o.begin() + i * total + off);
      }
      off += w;
    }
  });
  bool rec = false;
  for (const Tensor& p : parts) rec = rec || autodiff::should_record({&p});
  if (rec) {
    autodiff::record(parts, out, [parts, out, r, total]() {
      auto g = out_grad(out);
      std::size_t off = 0;
      for (const Tensor& p : parts) {
        const std::size_t w = p.dim(1);
        if (p.requires_grad()) {
          std::vector<float> d(r * w);
          for (std::size_t i = 0; i < r; ++i) {
            std::copy_n(g.begin() + i * total + off, w, d.begin() + i * w);
          }
          autodiff::accumulate(p, d);
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank2(x, "gather_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  for (std::size_t row : rows) {
    if (row >= r) throw IndexError("gather_rows: row index out of range");
  }
  Tensor out({rows.size(), c});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(xv.ptr() + rows[i] * c, c, o.begin() + i * c);
    }
  });
  if (autodiff::should_record({&x})) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    autodiff::record({x}, out, [x, out, idx, c]() {
      auto g = out_grad(out);
      std::vector<float> dx(x.numel(), 0.0f);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) dx[idx[i] * c + j] += g[i * c + j];
      }
      autodiff::accumulate(x, dx);
    });
  }
  return out;
}

Tensor gather_cols(const Tensor& x, std::span<const std::size_t> index, std::size_t k) {
  require_rank2(x, "gather_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (index.size() != r * k) {
    throw DimensionError("gather_cols: index length does not match rows x k");
  }
  for (std::size_t col : index) {
    if (col >= c) throw IndexError("gather_cols: column index out of range");
  }
  Tensor out({r, k});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < k; ++j) o[i * k + j] = xv[i * c + index[i * k + j]];
    }
  });
  if (autodiff::should_record({&x})) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    autodiff::record({x}, out, [x, out, idx, r, c, k]() {
      auto g = out_grad(out);
      std::vector<float> dx(r * c, 0.0f);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < k; ++j) dx[i * c + idx[i * k + j]] += g[i * k + j];
      }
      autodiff::accumulate(x, dx);
    });
  }
  return out;
}

Tensor gather_elements(const Tensor& x, std::span<const std::size_t> flat_index) {
  for (std::size_t i : flat_index) {
    if (i >= x.numel()) throw IndexError("gather_elements: index out of range");
  }
  Tensor out({flat_index.size(), 1});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> xv(x);
    for (std::size_t i = 0; i < flat_index.size(); ++i) o[i] = xv[flat_index[i]];
  });
  if (autodiff::should_record({&x})) {
    std::vector<std::size_t> idx(flat_index.begin(), flat_index.end());
    autodiff::record({x}, out, [x, out, idx]() {
      auto g = out_grad(out);
      std::vector<float> dx(x.numel(), 0.0f);
      for (std::size_t i = 0; i < idx.size(); ++i) dx[idx[i]] += g[i];
      autodiff::accumulate(x, dx);
    });
  }
  return out;
}

Tensor index_add_rows(std::size_t rows, std::size_t width,
                      const std::vector<RowContribution>& parts) {
  bool rec = false;
  for (const RowContribution& p : parts) {
    if (p.values.rank() != 2 || p.values.dim(0) != p.rows.size() ||
        p.values.dim(1) != width) {
      throw DimensionError("index_add_rows: contribution shape " +
                           shape_str(p.values.shape()) + " does not match its row list");
    }
    for (std::size_t row : p.rows) {
      if (row >= rows) throw IndexError("index_add_rows: row out of range");
    }
    rec = rec || autodiff::should_record({&p.values});
  }
  Tensor out({rows, width});
  detail::run(out, [&]<typename T>(std::span<T> o) {
    for (const RowContribution& p : parts) {
      View<T> pv(p.values);
      for (std::size_t i = 0; i < p.rows.size(); ++i) {
        T* dst = o.data() + p.rows[i] * width;
        const T* src = pv.ptr() + i * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    }
  });
  if (rec) {
    std::vector<Tensor> inputs;
    for (const RowContribution& p : parts) inputs.push_back(p.values);
    autodiff::record(inputs, out, [parts, out, width]() {
      auto g = out_grad(out);
      for (const RowContribution& p : parts) {
        if (!p.values.requires_grad()) continue;
        std::vector<float> d(p.rows.size() * width);
        for (std::size_t i = 0; i < p.rows.size(); ++i) {
          std::copy_n(g.begin() + p.rows[i] * width, width, d.begin() + i * width);
        }
        autodiff::accumulate(p.values, d);
      }
    });
  }
  return out;
}

}  // namespace nf
