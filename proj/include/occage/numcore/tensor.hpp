#pragma once

// Dense float64 tensors with tape-free reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node. Every differentiable op
// records its inputs and a closure that pushes the output gradient back
// into them; backward() walks the nodes in reverse topological order.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "occage/core/error.hpp"

namespace occage::nc {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  std::span<double> grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording for its lifetime (evaluation, parameter updates).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

class Tensor {
 public:
  using Backprop = std::function<void(detail::Node&)>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (nc::numel(shape) != values.size())
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + to_string(shape));
    for (auto d : shape)
      if (d == 0) throw ShapeError("tensor dimensions must be positive: " + to_string(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = nc::numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    auto n = nc::numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }

  // Output of a differentiable op. The closure is kept only when recording
  // is enabled and some input needs a gradient.
  static Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                            Backprop backprop) {
    return make_result(std::move(shape), std::move(values), std::vector<Tensor>(inputs), std::move(backprop));
  }
  static Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                            Backprop backprop) {
    Tensor out(std::move(shape), std::move(values));
    bool needs = false;
    if (grad_enabled())
      for (const auto& t : inputs) needs = needs || (t.defined() && t.requires_grad());
    if (needs) {
      out.node_->requires_grad = true;
      for (const auto& t : inputs)
        if (t.defined()) out.node_->inputs.push_back(t.node_);
      out.node_->backprop = std::move(backprop);
    }
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() const { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) const {
    if (node_->backprop) throw ValidationError("requires_grad can only be changed on leaf tensors");
    node_->requires_grad = rg;
  }
  bool is_leaf() const { return !node_->backprop; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() const { return node_->grad_buffer(); }
  void zero_grad() const { node_->grad.assign(node_->value.size(), 0.0); }

  double item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  // Value copy detached from the graph.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  // Reverse-mode accumulation from a scalar root. Leaf gradients accumulate
  // across calls; intermediate gradients are reset on every call.
  void backward() const;

  detail::Node* node() const { return node_.get(); }
  bool same_node(const Tensor& o) const { return node_ == o.node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline void Tensor::backward() const {
  if (numel() != 1) throw ShapeError("backward() needs a scalar root, got " + to_string(shape()));
  if (!requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  // Interior gradients are allocated on first contribution and dropped once
  // propagated; nodes nothing flowed into are skipped.
  for (auto* n : order)
    if (n->backprop) std::vector<double>().swap(n->grad);
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->backprop || n->grad.empty()) continue;
    n->backprop(*n);
    std::vector<double>().swap(n->grad);
  }
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

}  // namespace occage::nc
