#include "strel/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "strel/error.hpp"

namespace strel {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad && g_grad_enabled;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError(msg("from_data: shape ", shape_str(shape), " expects ", shape_numel(shape),
                         " values, got ", values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad && g_grad_enabled;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError(msg("extent: axis ", axis, " out of range for ", shape_str(impl_->shape)));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError(msg("item: tensor ", shape_str(impl_->shape), " is not scalar"));
  }
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != impl_->shape.size()) {
    throw ShapeError(msg("at: rank mismatch for ", shape_str(impl_->shape)));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    if (i >= impl_->shape[axis]) {
      throw ShapeError(msg("at: index ", i, " out of range on axis ", axis));
    }
    off = off * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[off];
}

void Tensor::set_requires_grad(bool v) {
  if (v && impl_->node) {
    throw ValueError("set_requires_grad: cannot mark an op output as a leaf");
  }
  impl_->requires_grad = v;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;  // copy keeps detached values immune to later forward reuse
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

std::vector<double>& BackwardPass::buf(const Tensor& t) {
  auto [it, inserted] = buffers_.try_emplace(t.impl());
  if (inserted) it->second.assign(t.numel(), 0.0);
  return it->second;
}

std::vector<double>* BackwardPass::find(const detail::TensorImpl* impl) {
  auto it = buffers_.find(impl);
  return it == buffers_.end() ? nullptr : &it->second;
}

Tensor make_from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                    BackwardFn fn) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool needs = false;
  for (const Tensor& p : parents) {
    if (p.requires_grad()) {
      needs = true;
      break;
    }
  }
  if (!needs) return out;
  out.impl_->requires_grad = true;
  auto node = std::make_shared<detail::GradNode>();
  node->parents = std::move(parents);
  node->apply = std::move(fn);
  out.impl_->node = std::move(node);
  return out;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ValueError(msg("backward: loss must be scalar, got ", shape_str(loss.shape())));
  }
  if (!loss.requires_grad()) {
    throw ValueError("backward: loss does not require grad (no tracked inputs)");
  }

  // Iterative DFS post-order over the graph: children before parents once
  // reversed. Graphs from deep pipelines overflow the call stack if recursive.
  std::vector<detail::TensorImpl*> order;
  std::unordered_map<detail::TensorImpl*, int> state;  // 0 unseen, 1 open, 2 done
  std::vector<std::pair<Tensor, std::size_t>> stack;
  stack.emplace_back(loss, 0);
  state[loss.impl()] = 1;
  std::unordered_map<detail::TensorImpl*, Tensor> handle;  // keep impls alive
  handle.emplace(loss.impl(), loss);

  while (!stack.empty()) {
    auto& [t, next_child] = stack.back();
    detail::GradNode* node = t.impl()->node.get();
    std::size_t n_parents = node ? node->parents.size() : 0;
    bool descended = false;
    while (next_child < n_parents) {
      const Tensor& p = node->parents[next_child++];
      if (!p.requires_grad()) continue;
      int& st = state[p.impl()];
      if (st == 0) {
        st = 1;
        handle.emplace(p.impl(), p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (descended) continue;
    state[t.impl()] = 2;
    order.push_back(t.impl());
    stack.pop_back();
  }

  BackwardPass pass;
  pass.buf(loss)[0] = 1.0;

  // order is post-order (parents-first); walk it backwards so each node's
  // output gradient is complete before it propagates.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* impl = *it;
    if (!impl->node) continue;
    std::vector<double>* og = pass.find(impl);
    if (!og) continue;  // not on a path that received gradient
    impl->node->apply(*og, pass);
  }

  // Fold local buffers into persistent grads, in deterministic graph order.
  for (detail::TensorImpl* impl : order) {
    if (!impl->requires_grad) continue;
    std::vector<double>* lg = pass.find(impl);
    if (!lg) continue;
    if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
    for (std::size_t i = 0; i < lg->size(); ++i) impl->grad[i] += (*lg)[i];
  }
}

}  // namespace strel
