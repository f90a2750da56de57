// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "nf/kv_config.hpp"
#include "nf/layers/linear.hpp"

namespace nf {

struct AdamWConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  // Decoupled decay, applied to matrices only (not norms or vectors).
  double weight_decay = 0.1;
  std::size_t warmup_steps = 0;
  // Cosine decay from lr to min_lr_ratio·lr over total_steps; 0 keeps lr
  // constant after warmup.
  std::size_t total_steps = 0;
  double min_lr_ratio = 0.1;
  // Global L2 gradient-norm limit; 0 disables.
  double grad_clip = 1.0;

  double lr_at(std::size_t step) const;
  // Keys under the given section: lr, beta1, beta2, eps, weight_decay,
  // warmup_steps, total_steps, min_lr_ratio, grad_clip.
  static AdamWConfig from_config(const KeyValueConfig& section);
  void to_config(KeyValueConfig& section) const;
};

class AdamW {
 public:
  AdamW(ParameterList params, const AdamWConfig& config);

  // Global L2 norm of the current gradients.
  double grad_norm() const;
  // One update from the accumulated gradients, then zeroes them.
  void step();
  void zero_grad();

  std::size_t steps_taken() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  double current_lr() const { return config_.lr_at(step_); }

 private:
  ParameterList params_;
  AdamWConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace nf
