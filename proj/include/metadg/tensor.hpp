#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace metadg {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for rank/extent mismatches between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

/// Node of the reverse-mode tape. `backward_fn` reads `grad` of this node and
/// accumulates into the grads of `inputs`.
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<TensorImplPtr> inputs;
  std::function<void(TensorImpl&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

/// Dense row-major double tensor with value semantics on the handle and
/// shared ownership of storage. Copies alias; use `clone()` for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->ensure_grad(); }
  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }

  double item() const;
  double& at(std::initializer_list<std::int64_t> index);
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag);

  void zero_grad();
  /// Reverse sweep from this (scalar) tensor.
  void backward();

  Tensor detach() const;
  Tensor clone() const;

  TensorImpl* impl() const { return impl_.get(); }
  const TensorImplPtr& impl_ptr() const { return impl_; }

 private:
  std::int64_t offset(std::initializer_list<std::int64_t> index) const;
  TensorImplPtr impl_;
};

/// True while operations record the tape.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Creates an op result; the backward closure is attached only when grad mode
/// is on and some input requires grad.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(TensorImpl&)> backward_fn);

}  // namespace detail

}  // namespace metadg
