#pragma once

// Reverse-mode autodiff tape. Each recorded node owns its value, a lazily
// allocated gradient, and a closure that pushes its gradient to its inputs.
// Gradients accumulate additively, so fan-out needs no special handling.

#include "geowarp/nn/tensor.hpp"

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace geowarp::nn {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

enum class BackwardOrder {
  kReverseExecution,  // walk nodes from last to first
  kDepthFirst,        // reverse post-order of a DFS from the root
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}, nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // The node requires a gradient when any input does; otherwise the backward
  // closure is dropped.
  Var<T> record(Tensor<T> value, std::vector<int> inputs, BackwardFn backward) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes_.at(static_cast<std::size_t>(i)).requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs, std::move(inputs), needs ? std::move(backward) : nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
  const std::vector<int>& inputs(int id) const { return nodes_.at(static_cast<std::size_t>(id)).inputs; }

  // Gradient buffer for a node, zero-initialised on first access.
  Tensor<T>& grad(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool has_grad(int id) const { return !nodes_.at(static_cast<std::size_t>(id)).grad.empty(); }

  // Gradient of the last backward() root with respect to v; zeros if v did
  // not contribute.
  Tensor<T> grad_of(Var<T> v) {
    if (has_grad(v.id)) return grad(v.id);
    return Tensor<T>(value(v.id).shape());
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1; root must hold a single value.
  void backward(Var<T> root, BackwardOrder order = BackwardOrder::kReverseExecution) {
    if (root.tape != this) throw std::invalid_argument("backward: variable from another tape");
    if (value(root.id).size() != 1) throw std::invalid_argument("backward: root must be a scalar");
    for (auto& n : nodes_) n.grad = Tensor<T>();
    grad(root.id)[0] = T(1);
    if (order == BackwardOrder::kReverseExecution) {
      for (int id = root.id; id >= 0; --id) step(id);
    } else {
      for (int id : depth_first_order(root.id)) step(id);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
  };

  void step(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }

  // Consumers before producers: reverse of a DFS post-order.
  std::vector<int> depth_first_order(int root) const {
    std::vector<int> post;
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    seen[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
      auto& [id, next] = stack.back();
      const auto& ins = nodes_[static_cast<std::size_t>(id)].inputs;
      if (next < ins.size()) {
        const int child = ins[next++];
        if (!seen[static_cast<std::size_t>(child)]) {
          seen[static_cast<std::size_t>(child)] = 1;
          stack.emplace_back(child, 0);
        }
      } else {
        post.push_back(id);
        stack.pop_back();
      }
    }
    return {post.rbegin(), post.rend()};
  }

  std::vector<Node> nodes_;
};

}  // namespace geowarp::nn
