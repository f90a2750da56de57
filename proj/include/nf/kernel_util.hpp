// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Helpers for writing an operation's forward pass once, templated on the
// element type, so it runs in float normally and in double under a
// PreciseScope.

#include <span>
#include <type_traits>
#include <vector>

#include "nf/tensor.hpp"

namespace nf::detail {

// Read-only view of a tensor's values as T.
template <typename T>
class View {
 public:
  explicit View(const Tensor& t) {
    if constexpr (std::is_same_v<T, float>) {
      span_ = t.data();
    } else if (!t.impl().shadow.empty()) {
      span_ = t.impl().shadow;
    } else {
      store_.assign(t.data().begin(), t.data().end());
      span_ = store_;
    }
  }
  View(const View&) = delete;
  View& operator=(const View&) = delete;

  T operator[](std::size_t i) const { return span_[i]; }
  const T* ptr() const { return span_.data(); }
  std::size_t size() const { return span_.size(); }
  std::span<const T> span() const { return span_; }

 private:
  std::vector<T> store_;
  std::span<const T> span_;
};

// Calls kernel(std::span<T> out) with T = float, or with T = double when a
// PreciseScope is active, in which case the double result becomes the shadow
// of `out` and its float rounding the data.
template <typename Kernel>
void run(Tensor& out, Kernel&& kernel) {
  if (!precise_mode()) {
    kernel(out.mutable_data());
    return;
  }
  std::vector<double> wide(out.numel(), 0.0);
  kernel(std::span<double>(wide));
  auto data = out.mutable_data();
  for (std::size_t i = 0; i < wide.size(); ++i) data[i] = static_cast<float>(wide[i]);
  out.impl().shadow = std::move(wide);
}

}  // namespace nf::detail
