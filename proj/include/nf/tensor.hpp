// Copyright 2026 The nemoforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  // Empty until a gradient is first accumulated; afterwards data.size() long.
  std::vector<float> grad;
  bool requires_grad = false;
  // Double-precision values, filled only for outputs computed while a
  // PreciseScope is active. data then holds their float rounding.
  std::vector<double> shadow;
};

// Dense row-major float32 tensor with optional gradient buffer.
//
// A Tensor is a shared handle: copies alias the same storage. Values are only
// changed through recorded operations, parameter initialization and optimizer
// updates; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor scalar(float value, bool requires_grad = false);
  static Tensor filled(Shape shape, float value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }
  // Product of all but the last dimension, and the last dimension.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const float> data() const { return impl_->data; }
  // Drops any double shadow, since the caller may change the values.
  std::span<float> mutable_data() {
    impl_->shadow.clear();
    return impl_->data;
  }
  float item() const;
  // item() in double, taken from the shadow when present.
  double precise_item() const;
  float operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  // Allocates a zero gradient buffer on first use.
  std::span<float> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  // Same values as a new leaf that does not require gradients.
  Tensor detach() const;

  const TensorImpl* id() const { return impl_.get(); }
  TensorImpl& impl() const { return *impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// While active on this thread, operations also evaluate in double precision
// and keep the result as a shadow next to the float data. Used by the
// finite-difference oracle; gradients are never recorded with it.
class PreciseScope {
 public:
  PreciseScope();
  ~PreciseScope();
  PreciseScope(const PreciseScope&) = delete;
  PreciseScope& operator=(const PreciseScope&) = delete;

 private:
  bool previous_;
};

bool precise_mode();

}  // namespace nf
