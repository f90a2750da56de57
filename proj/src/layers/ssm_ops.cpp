// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/layers/ssm_ops.hpp"

#include <cmath>

#include "nf/autodiff.hpp"
#include "nf/error.hpp"
#include "nf/kernel_util.hpp"

namespace nf {

using detail::View;

namespace {

template <typename T>
T softplus_of(T u) {
  // log(1 + e^u) without overflow for large u.
  return u > T(20) ? u : std::log1p(std::exp(u));
}

void require_rows(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
    throw DimensionError(std::string(what) + ": expected [" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "], got " + shape_str(t.shape()));
  }
}

void require_numel(const Tensor& t, std::size_t n, const char* what) {
  if (t.numel() != n) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(n) +
                         " elements, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor softplus_clamp(const Tensor& u, float lo, float hi) {
  Tensor out(u.shape());
  detail::run(out, [&]<typename T>(std::span<T> o) {
    View<T> uv(u);
    for (std::size_t i = 0; i < o.size(); ++i) {
      o[i] = std::clamp(softplus_of(uv[i]), T(lo), T(hi));
    }
  });
  if (autodiff::should_record({&u})) {
    autodiff::record({u}, out, [u, out, lo, hi]() {
      auto g = out.grad();
      std::vector<float> d(g.size(), 0.0f);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double sp = softplus_of(double(u[i]));
        if (sp < lo || sp > hi) continue;
        d[i] = static_cast<float>(g[i] / (1.0 + std::exp(-double(u[i]))));
      }
      autodiff::accumulate(u, d);
    });
  }
  return out;
}

ConvResult causal_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         std::span<const float> tail) {
  if (x.rank() != 2 || weight.rank() != 2) {
    throw DimensionError("causal_conv1d expects 2-D input and weight");
  }
  const std::size_t steps = x.dim(0), ch = x.dim(1), width = weight.dim(0);
  if (width == 0) throw DimensionError("causal_conv1d: zero kernel width");
  require_rows(weight, width, ch, "causal_conv1d weight");
  require_numel(bias, ch, "causal_conv1d bias");
  if (tail.size() != (width - 1) * ch) {
    throw ContractError("causal_conv1d: tail holds " + std::to_string(tail.size()) +
                        " values, expected " + std::to_string((width - 1) * ch));
  }
  const std::size_t lead = width - 1;
  // Padded input row r: tail for r < lead, x otherwise.
  auto padded = [&](std::span<const float> xs, std::size_t r, std::size_t c) {
    return r < lead ? tail[r * ch + c] : xs[(r - lead) * ch + c];
  };

  ConvResult result{Tensor({steps, ch}), std::vector<float>(lead * ch)};
  detail::run(result.y, [&]<typename T>(std::span<T> o) {
    View<T> xv(x), wv(weight), bv(bias);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t c = 0; c < ch; ++c) {
        T acc = bv[c];
        for (std::size_t k = 0; k < width; ++k) {
          const std::size_t r = t + k;
          const T in = r < lead ? T(tail[r * ch + c]) : xv[(r - lead) * ch + c];
          acc += wv[k * ch + c] * in;
        }
        o[t * ch + c] = acc;
      }
    }
  });
  for (std::size_t r = 0; r < lead; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      result.tail[r * ch + c] = padded(x.data(), steps + r, c);
    }
  }

  if (autodiff::should_record({&x, &weight, &bias})) {
    std::vector<float> saved_tail(tail.begin(), tail.end());
    Tensor out = result.y;
    autodiff::record({x, weight, bias}, result.y,
                     [x, weight, bias, out, saved_tail, steps, ch, width, lead]() {
      auto g = out.grad();
      auto xs = x.data();
      std::vector<float> dx(steps * ch, 0.0f), dw(width * ch, 0.0f);
      std::vector<double> db(ch, 0.0);
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t c = 0; c < ch; ++c) {
          const float gy = g[t * ch + c];
          db[c] += gy;
          for (std::size_t k = 0; k < width; ++k) {
            const std::size_t r = t + k;
            const float in = r < lead ? saved_tail[r * ch + c] : xs[(r - lead) * ch + c];
            dw[k * ch + c] += gy * in;
            if (r >= lead) dx[(r - lead) * ch + c] += gy * weight[k * ch + c];
          }
        }
      }
      autodiff::accumulate(x, dx);
      autodiff::accumulate(weight, dw);
      autodiff::accumulate(bias, std::vector<float>(db.begin(), db.end()));
    });
  }
  return result;
}

ScanResult ssm_scan(const Tensor& x, const Tensor& dt, const Tensor& a, const Tensor& b,
                    const Tensor& c, const Tensor& d, std::span<const float> h0) {
  if (x.rank() != 2 || dt.rank() != 2 || b.rank() != 2) {
    throw DimensionError("ssm_scan expects 2-D x, dt, b and c");
  }
  const std::size_t steps = x.dim(0), heads = dt.dim(1), n = b.dim(1);
  if (heads == 0 || x.dim(1) % heads != 0) {
    throw DimensionError("ssm_scan: width " + std::to_string(x.dim(1)) +
                         " is not a multiple of " + std::to_string(heads) + " heads");
  }
  const std::size_t p = x.dim(1) / heads, hp = heads * p;
  require_rows(dt, steps, heads, "ssm_scan dt");
  require_rows(b, steps, n, "ssm_scan b");
  require_rows(c, steps, n, "ssm_scan c");
  require_numel(a, heads, "ssm_scan a");
  require_numel(d, heads, "ssm_scan d");
  if (h0.size() != hp * n) {
    throw ContractError("ssm_scan: state holds " + std::to_string(h0.size()) +
                        " values, expected " + std::to_string(hp * n));
  }

  const bool record = autodiff::should_record({&x, &dt, &a, &b, &c, &d});
  // h_t for every step, kept for the backward pass.
  std::vector<float> history;
  if (record) history.resize(steps * hp * n);

  ScanResult result{Tensor({steps, hp}), std::vector<float>(hp * n)};
  detail::run(result.y, [&]<typename T>(std::span<T> o) {
    View<T> xv(x), dtv(dt), av(a), bv(b), cv(c), dv(d);
    std::vector<T> h(h0.begin(), h0.end());
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t hd = 0; hd < heads; ++hd) {
        const T step = dtv[t * heads + hd];
        const T decay = std::exp(step * av[hd]);
        for (std::size_t q = 0; q < p; ++q) {
          const std::size_t ch = hd * p + q;
          const T xin = xv[t * hp + ch];
          T* hrow = h.data() + ch * n;
          T acc = dv[hd] * xin;
          for (std::size_t s = 0; s < n; ++s) {
            hrow[s] = decay * hrow[s] + step * bv[t * n + s] * xin;
            acc += cv[t * n + s] * hrow[s];
          }
          o[t * hp + ch] = acc;
        }
      }
      if (record) {
        for (std::size_t i = 0; i < h.size(); ++i) {
          history[t * hp * n + i] = static_cast<float>(h[i]);
        }
      }
    }
    for (std::size_t i = 0; i < h.size(); ++i) result.state[i] = static_cast<float>(h[i]);
  });

  if (record) {
    std::vector<float> start(h0.begin(), h0.end());
    Tensor out = result.y;
    autodiff::record(
        {x, dt, a, b, c, d}, result.y,
        [x, dt, a, b, c, d, out, start, history = std::move(history), steps, heads, p, hp,
         n]() {
          auto gy = out.grad();
          std::vector<float> dx(steps * hp, 0.0f), ddt(steps * heads, 0.0f),
              db(steps * n, 0.0f), dc(steps * n, 0.0f);
          std::vector<double> da(heads, 0.0), dd(heads, 0.0);
          // Gradient with respect to h_t, carried backwards through time.
          std::vector<double> gh(hp * n, 0.0);
          for (std::size_t t = steps; t-- > 0;) {
            const float* ht = history.data() + t * hp * n;
            const float* hprev = t == 0 ? start.data() : history.data() + (t - 1) * hp * n;
            for (std::size_t hd = 0; hd < heads; ++hd) {
              const double step = dt[t * heads + hd];
              const double decay = std::exp(step * double(a[hd]));
              double g_decay = 0.0, g_step = 0.0;
              for (std::size_t q = 0; q < p; ++q) {
                const std::size_t ch = hd * p + q;
                const double g = gy[t * hp + ch];
                const double xin = x[t * hp + ch];
                dd[hd] += g * xin;
                double gx = d[hd] * g;
                for (std::size_t s = 0; s < n; ++s) {
                  const std::size_t i = ch * n + s;
                  gh[i] += c[t * n + s] * g;
                  dc[t * n + s] += static_cast<float>(g * ht[i]);
                  g_decay += gh[i] * hprev[i];
                  g_step += gh[i] * b[t * n + s] * xin;
                  db[t * n + s] += static_cast<float>(gh[i] * step * xin);
                  gx += gh[i] * step * b[t * n + s];
                  gh[i] *= decay;
                }
                dx[t * hp + ch] += static_cast<float>(gx);
              }
              // decay = exp(step·a)
              ddt[t * heads + hd] += static_cast<float>(g_step + g_decay * decay * a[hd]);
              da[hd] += g_decay * decay * step;
            }
          }
          autodiff::accumulate(x, dx);
          autodiff::accumulate(dt, ddt);
          autodiff::accumulate(a, std::vector<float>(da.begin(), da.end()));
          autodiff::accumulate(b, db);
          autodiff::accumulate(c, dc);
          autodiff::accumulate(d, std::vector<float>(dd.begin(), dd.end()));
        });
  }
  return result;
}

}  // namespace nf
