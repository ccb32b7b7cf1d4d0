#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "exact/errors.hpp"
#include "exact/rng.hpp"

namespace exact {

using Extents = std::vector<std::int64_t>;

inline std::int64_t numel(const Extents& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Extents& shape);

// Axis triple for strides, paddings and spatial targets, in (d, h, w) order.
struct Tri {
  std::int64_t d = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;
  bool operator==(const Tri&) const = default;
};

// Dense row-major tensor (last axis fastest), rank <= 5. Copies share the
// underlying buffer; tensors are treated as immutable once produced by an op,
// except for the optimizer's explicit in-place parameter updates. The
// gradient buffer, when allocated, always matches the data shape and is
// shared with tape leaves so backward accumulates directly into it.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Extents shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(static_cast<std::size_t>(numel(shape_)), T(0))) {
    check_shape();
  }

  Tensor(Extents shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::make_shared<std::vector<T>>(std::move(data))) {
    check_shape();
    if (static_cast<std::int64_t>(data_->size()) != numel(shape_))
      fail(ErrCode::shape_mismatch, "tensor buffer length " + std::to_string(data_->size()) +
                                        " does not match shape " + shape_str(shape_));
  }

  static Tensor full(Extents shape, T value) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = value;
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  static Tensor random_uniform(Extents shape, Rng& rng, T lo = T(0), T hi = T(1)) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.next_range(double(lo), double(hi)));
    return t;
  }

  static Tensor random_gauss(Extents shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.next_gauss() * stddev);
    return t;
  }

  const Extents& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t extent(std::int64_t axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  std::span<T> mutable_data() { return {data_->data(), data_->size()}; }

  T item() const {
    if (size() != 1) fail(ErrCode::shape_mismatch, "item() requires a single-element tensor");
    return (*data_)[0];
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    t.requires_grad_ = requires_grad_;
    if (grad_) t.grad_ = std::make_shared<std::vector<T>>(*grad_);
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>((*data_)[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  bool requires_grad() const { return requires_grad_; }

  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on && !grad_) grad_ = std::make_shared<std::vector<T>>(data_->size(), T(0));
  }

  bool has_grad() const { return static_cast<bool>(grad_); }
  std::span<T> grad() { return {grad_->data(), grad_->size()}; }
  std::span<const T> grad() const { return {grad_->data(), grad_->size()}; }
  const std::shared_ptr<std::vector<T>>& grad_buffer() const { return grad_; }

  void zero_grad() {
    if (grad_)
      for (auto& g : *grad_) g = T(0);
  }

  bool all_finite() const {
    for (const T& v : *data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void check_finite(const std::string& what) const {
    if (!all_finite()) fail(ErrCode::numeric, "non-finite value in " + what);
  }

 private:
  void check_shape() const {
    if (shape_.size() > 5) fail(ErrCode::shape_mismatch, "rank > 5: " + shape_str(shape_));
    for (auto e : shape_)
      if (e < 1) fail(ErrCode::shape_mismatch, "nonpositive extent in " + shape_str(shape_));
  }

  Extents shape_;
  std::shared_ptr<std::vector<T>> data_;
  std::shared_ptr<std::vector<T>> grad_;
  bool requires_grad_ = false;
};

}  // namespace exact
