#pragma once

#include <functional>
#include <span>
#include <vector>

#include "exact/tensor.hpp"

namespace exact {

template <typename T>
class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid until the tape
// is reset or destroyed.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::int32_t id = -1;

  const Tensor<T>& value() const;
  const Extents& shape() const { return value().shape(); }
};

// Reverse-mode tape. Primitives append nodes in forward order; backward()
// walks the node list once in exact reverse recording order, accumulating
// into per-node gradient buffers. Leaf nodes share their gradient buffer
// with the originating Tensor, so parameter gradients land in place.
// A second backward() without recording a new forward node is rejected.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    std::shared_ptr<std::vector<T>> grad;  // allocated on first accumulation
    bool needs_grad = false;
    std::function<void(Tape&, const std::vector<T>&)> backward;  // may be empty (leaf/constant)
  };

  // Leaf whose gradient (if requires_grad) accumulates into t's grad buffer.
  Var<T> leaf(const Tensor<T>& t) {
    Node n;
    n.value = t;
    n.needs_grad = t.requires_grad();
    if (t.requires_grad()) n.grad = t.grad_buffer();
    return push(std::move(n));
  }

  // Non-differentiable input (labels, masks, frozen coefficients).
  Var<T> constant(const Tensor<T>& t) {
    Node n;
    n.value = t;
    n.needs_grad = false;
    return push(std::move(n));
  }

  Var<T> push(Node n) {
    backward_taken_ = false;
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  Node& node(Var<T> v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  bool needs_grad(Var<T> v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  std::vector<T>& grad_buffer(std::int32_t id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad) n.grad = std::make_shared<std::vector<T>>(n.value.size(), T(0));
    return *n.grad;
  }

  // Gradient of the last backward() root w.r.t. v (zeros if v was unreached).
  std::span<const T> grad(Var<T> v) {
    return {grad_buffer(v.id).data(), grad_buffer(v.id).size()};
  }

  void backward(Var<T> root) {
    if (backward_taken_)
      fail(ErrCode::numeric, "second backward pass on a tape without a new forward pass");
    const Node& r = nodes_[static_cast<std::size_t>(root.id)];
    if (r.value.size() != 1) fail(ErrCode::shape_mismatch, "backward root must be scalar");
    backward_taken_ = true;
    grad_buffer(root.id)[0] += T(1);
    for (std::int32_t id = root.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || !n.grad || !n.backward) continue;
      n.backward(*this, *n.grad);
    }
  }

  void reset() {
    nodes_.clear();
    backward_taken_ = false;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  bool backward_taken_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(*this);
}

// ---- Primitives -----------------------------------------------------------
// Elementwise / scalar
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> div(Var<T> a, Var<T> b);
template <typename T> Var<T> add_scalar(Var<T> a, T c);
template <typename T> Var<T> mul_scalar(Var<T> a, T c);
template <typename T> Var<T> affine(Var<T> a, T scale, T shift);  // scale*a + shift
template <typename T> Var<T> log(Var<T> a);           // errors unless all entries > 0
template <typename T> Var<T> pow_const(Var<T> a, double p);
template <typename T> Var<T> sigmoid(Var<T> a);
template <typename T> Var<T> relu_leaky(Var<T> a, double slope);
template <typename T> Var<T> detach(Var<T> a);

// Reductions
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
template <typename T> Var<T> mean_spatial(Var<T> a);  // [C, spatial...] -> [C]
template <typename T> Var<T> topk_mean(Var<T> a, std::int64_t k);

// Normalization over spatial axes per channel, non-affine.
template <typename T> Var<T> instance_norm(Var<T> a, double eps);

// Structure
template <typename T> Var<T> concat_channels(std::span<const Var<T>> parts);
template <typename T> Var<T> select_channels(Var<T> a, std::int64_t first, std::int64_t count);
template <typename T> Var<T> add_channel_bias(Var<T> x, Var<T> bias);
template <typename T> Var<T> matvec(Var<T> w, Var<T> x);  // [m,n] x [n] -> [m]

// Convolution: input [Ci,D,H,W], kernel [Co,Ci,kd,kh,kw] -> [Co,D',H',W'].
template <typename T> Var<T> conv3d(Var<T> input, Var<T> kernel, Tri stride, Tri pad);
// Transposed convolution: input [Ci,D,H,W], kernel [Ci,Co,kd,kh,kw].
template <typename T> Var<T> transposed_conv3d(Var<T> input, Var<T> kernel, Tri stride);

// Resampling on [C,D,H,W] volumes, half-pixel conventions (align corners false).
template <typename T> Var<T> resize_trilinear(Var<T> a, Tri target);
template <typename T> Var<T> resize_nearest(Var<T> a, Tri target);

}  // namespace exact
