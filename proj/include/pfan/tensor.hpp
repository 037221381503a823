#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pfan/error.hpp"

namespace pfan {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
bool& grad_mode_flag();
}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Dense row-major n-d array with optional reverse-mode gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same buffer and graph node,
/// which is what lets parameter structs and a ParamStore refer to one set of
/// weights. Use clone() for an independent deep copy.
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
  /// Receives the output gradient and one accumulator per parent; an
  /// accumulator is null when that parent does not need a gradient.
  using BackwardFn = std::function<void(const Array& grad_out, std::span<Array* const> grad_in)>;

  struct Impl;
  struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<Impl>> parents;
    BackwardFn backward;
  };
  struct Impl {
    Shape shape;
    Array data;
    Array grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;
  };

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<Impl>()) {
    impl_->data = Array::Constant(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }
  Tensor(Shape shape, Array data) : impl_(std::make_shared<Impl>()) {
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                       std::to_string(data.size()) + " elements");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }
  Tensor(Shape shape, std::initializer_list<T> values)
      : Tensor(std::move(shape), Array(Eigen::Map<const Array>(values.begin(), Index(values.size())))) {}

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  Index dim() const { return Index(impl_->shape.size()); }
  Index extent(Index axis) const { return impl_->shape.at(std::size_t(axis < 0 ? axis + dim() : axis)); }
  Index size() const { return impl_->data.size(); }

  const Array& data() const { return impl_->data; }
  /// Direct buffer access. Writing through it bypasses the graph; intended for
  /// optimizers, initializers and tests.
  Array& mutable_data() const { return impl_->data; }
  T item() const {
    if (size() != 1) throw ShapeError("item: tensor has " + std::to_string(size()) + " elements");
    return impl_->data[0];
  }
  T operator[](Index i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  const Tensor& set_requires_grad(bool flag) const {
    impl_->requires_grad = flag;
    return *this;
  }
  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  /// Accumulated gradient; zeros when nothing has been accumulated yet.
  Array grad() const { return has_grad() ? impl_->grad : Array::Zero(size()); }
  void zero_grad() const { impl_->grad.resize(0); }

  bool is_leaf() const { return !impl_->node; }
  const char* op() const { return impl_->node ? impl_->node->op : "leaf"; }

  Tensor detach() const {
    Tensor out;
    out.impl_ = std::make_shared<Impl>();
    out.impl_->shape = impl_->shape;
    out.impl_->data = impl_->data;
    return out;
  }
  Tensor clone() const {
    Tensor out = detach();
    out.impl_->requires_grad = impl_->requires_grad;
    return out;
  }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  /// Reverse-mode sweep from a one-element tensor. Gradients accumulate into
  /// every reachable leaf with requires_grad set; call zero_grad() to reset.
  void backward() const;

  /// Builds an op result. The node is only recorded when grad mode is on and
  /// at least one parent requires a gradient.
  static Tensor make_result(Shape shape, Array data, const char* op,
                            std::initializer_list<const Tensor*> parents, BackwardFn fn);
  static Tensor make_result(Shape shape, Array data, const char* op,
                            const std::vector<Tensor>& parents, BackwardFn fn);

 private:
  std::shared_ptr<Impl> impl_;
};

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, Array data, const char* op,
                                 std::initializer_list<const Tensor*> parents, BackwardFn fn) {
  Tensor out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Tensor* p : parents) needs = needs || (p->defined() && p->requires_grad());
  if (!needs) return out;
  auto node = std::make_shared<Node>();
  node->op = op;
  for (const Tensor* p : parents) node->parents.push_back(p->impl_);
  node->backward = std::move(fn);
  out.impl_->requires_grad = true;
  out.impl_->node = std::move(node);
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, Array data, const char* op,
                                 const std::vector<Tensor>& parents, BackwardFn fn) {
  Tensor out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  if (!needs) return out;
  auto node = std::make_shared<Node>();
  node->op = op;
  for (const Tensor& p : parents) node->parents.push_back(p.impl_);
  node->backward = std::move(fn);
  out.impl_->requires_grad = true;
  out.impl_->node = std::move(node);
  return out;
}

template <typename T>
void Tensor<T>::backward() const {
  if (size() != 1) {
    throw ShapeError("backward: loss must have one element, got shape " + shape_str(shape()));
  }
  if (!impl_->requires_grad) return;

  // Post-order DFS: parents precede children in `order`.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const std::size_t n_parents = node->node ? node->node->parents.size() : 0;
    if (next < n_parents) {
      Impl* parent = node->node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<Impl*, Array> grads;
  grads[impl_.get()] = Array::Ones(1);
  std::vector<Array*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* current = *it;
    auto found = grads.find(current);
    if (found == grads.end()) continue;
    if (current->node) {
      slots.clear();
      for (const auto& parent : current->node->parents) {
        if (!parent->requires_grad) {
          slots.push_back(nullptr);
          continue;
        }
        Array& slot = grads[parent.get()];
        if (slot.size() == 0) slot = Array::Zero(parent->data.size());
        slots.push_back(&slot);
      }
      current->node->backward(found->second, std::span<Array* const>(slots));
      grads.erase(current);
    } else {
      if (current->grad.size() != current->data.size()) current->grad = Array::Zero(current->data.size());
      current->grad += found->second;
    }
  }
}

template <typename T>
Tensor<T> zeros(Shape shape) {
  return Tensor<T>(std::move(shape), T(0));
}
template <typename T>
Tensor<T> ones(Shape shape) {
  return Tensor<T>(std::move(shape), T(1));
}
template <typename T>
Tensor<T> full(Shape shape, T value) {
  return Tensor<T>(std::move(shape), value);
}

}  // namespace pfan
