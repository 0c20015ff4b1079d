#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace strel {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
class BackwardPass;

// Closure that propagates a node's output gradient into its parents' local
// gradient buffers. It captures the parent handles (and any forward values it
// needs) itself.
using BackwardFn = std::function<void(const std::vector<double>& out_grad, BackwardPass& pass)>;

namespace detail {

struct GradNode {
  std::vector<Tensor> parents;
  BackwardFn apply;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // persistent, accumulated across backward() calls
  std::shared_ptr<GradNode> node;
};

}  // namespace detail

// Dense row-major 64-bit float tensor. A Tensor is a cheap handle onto shared
// storage; copies alias the same buffer. Tensors without gradient tracking
// are immutable by convention once built and safe to share across threads.
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t extent(std::size_t axis) const;

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }

  double item() const;
  double at(std::initializer_list<std::size_t> idx) const;

  bool requires_grad() const { return impl_->requires_grad; }
  // Marks a leaf as tracked. Only valid on tensors that are not op outputs.
  void set_requires_grad(bool v);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> grad_mut() { return impl_->grad; }
  void zero_grad();

  // Same storage, no graph edge and no gradient tracking.
  Tensor detach() const;
  // Deep copy of the values; fresh untracked leaf.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  detail::TensorImpl* impl() const { return impl_.get(); }

  friend Tensor make_from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                             BackwardFn fn);
  friend void backward(const Tensor& loss);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Per-backward-call gradient scratch. Keeping the propagation buffers local to
// the call (and only folding them into the persistent .grad at the end) makes
// repeated backward() calls accumulate exactly N times the one-pass gradient.
class BackwardPass {
 public:
  std::vector<double>& buf(const Tensor& t);
  bool has(const detail::TensorImpl* impl) const { return buffers_.contains(impl); }
  std::vector<double>* find(const detail::TensorImpl* impl);

 private:
  std::unordered_map<const detail::TensorImpl*, std::vector<double>> buffers_;
};

// Builds an op output. Attaches the backward closure only when gradients are
// both enabled and needed; otherwise the node is dropped and the output is a
// plain value.
Tensor make_from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                    BackwardFn fn);

// Reverse-mode sweep from a scalar loss. Accumulates d(loss)/d(t) into every
// reachable tensor with requires_grad, including intermediates.
void backward(const Tensor& loss);

bool grad_enabled();

// RAII scope that disables graph construction (inference / feature extraction).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace strel
