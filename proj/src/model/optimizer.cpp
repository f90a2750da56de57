// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "nf/model/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "nf/error.hpp"

namespace nf {

double AdamWConfig::lr_at(std::size_t step) const {
  if (warmup_steps > 0 && step < warmup_steps) {
    return lr * double(step + 1) / double(warmup_steps);
  }
  if (total_steps == 0 || total_steps <= warmup_steps) return lr;
  const double progress =
      std::min(1.0, double(step - warmup_steps) / double(total_steps - warmup_steps));
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return lr * (min_lr_ratio + (1.0 - min_lr_ratio) * cosine);
}

AdamWConfig AdamWConfig::from_config(const KeyValueConfig& s) {
  AdamWConfig c;
  c.lr = s.get_double("lr", c.lr);
  c.beta1 = s.get_double("beta1", c.beta1);
  c.beta2 = s.get_double("beta2", c.beta2);
  c.eps = s.get_double("eps", c.eps);
  c.weight_decay = s.get_double("weight_decay", c.weight_decay);
  c.warmup_steps = static_cast<std::size_t>(s.get_int("warmup_steps", 0));
  c.total_steps = static_cast<std::size_t>(s.get_int("total_steps", 0));
  c.min_lr_ratio = s.get_double("min_lr_ratio", c.min_lr_ratio);
  c.grad_clip = s.get_double("grad_clip", c.grad_clip);
  if (c.lr < 0.0 || c.beta1 < 0.0 || c.beta1 >= 1.0 || c.beta2 < 0.0 || c.beta2 >= 1.0 ||
      c.eps <= 0.0 || c.weight_decay < 0.0 || c.grad_clip < 0.0) {
    throw ConfigError("optimizer: hyperparameter out of range");
  }
  return c;
}

void AdamWConfig::to_config(KeyValueConfig& s) const {
  s.set("lr", format_double(lr));
  s.set("beta1", format_double(beta1));
  s.set("beta2", format_double(beta2));
  s.set("eps", format_double(eps));
  s.set("weight_decay", format_double(weight_decay));
  s.set("warmup_steps", std::to_string(warmup_steps));
  s.set("total_steps", std::to_string(total_steps));
  s.set("min_lr_ratio", format_double(min_lr_ratio));
  s.set("grad_clip", format_double(grad_clip));
}

AdamW::AdamW(ParameterList params, const AdamWConfig& config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0f);
    v_.emplace_back(p.tensor.numel(), 0.0f);
  }
}

double AdamW::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) sq += double(g) * g;
  }
  return std::sqrt(sq);
}

void AdamW::step() {
  const double lr = config_.lr_at(step_);
  const double norm = grad_norm();
  const double clip =
      config_.grad_clip > 0.0 && norm > config_.grad_clip ? config_.grad_clip / norm : 1.0;
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    if (!t.has_grad()) continue;
    const bool decay = t.rank() >= 2;
    auto g = t.grad();
    auto w = t.mutable_data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = double(g[j]) * clip;
      m_[i][j] = static_cast<float>(config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * gj);
      v_[i][j] = static_cast<float>(config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * gj * gj);
      const double mhat = m_[i][j] / bc1, vhat = v_[i][j] / bc2;
      double update = mhat / (std::sqrt(vhat) + config_.eps);
      if (decay) update += config_.weight_decay * w[j];
      w[j] = static_cast<float>(w[j] - lr * update);
    }
  }
  zero_grad();
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace nf
