#include "metadg/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace metadg {

namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor " + shape_str(shape()));
  return impl_->data[0];
}

std::int64_t Tensor::offset(std::initializer_list<std::int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) {
    throw ShapeError("index rank mismatch for " + shape_str(shape()));
  }
  std::int64_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    const auto extent = impl_->shape[axis++];
    if (i < 0 || i >= extent) throw std::out_of_range("tensor index out of range");
    off = off * extent + i;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::int64_t> index) {
  return impl_->data[static_cast<std::size_t>(offset(index))];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  return impl_->data[static_cast<std::size_t>(offset(index))];
}

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::backward() {
  if (numel() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS; reversed it is a valid reverse-topological order.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorImpl* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(TensorImpl&)> backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) track = track || (in.defined() && in.requires_grad());
  }
  if (track) {
    impl->requires_grad = true;
    impl->inputs.reserve(inputs.size());
    for (auto& in : inputs) impl->inputs.push_back(in.impl_ptr());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

}  // namespace metadg
