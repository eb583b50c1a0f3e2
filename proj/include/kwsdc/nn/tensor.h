// Copyright 2026 The kwsdc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Each operation returns a Tensor whose node keeps shared ownership of its
// inputs and a closure that pushes the output gradient back into them.
// Backward() on a scalar result visits the graph in reverse topological
// order. Leaf tensors created with requires_grad accumulate gradients until
// ZeroGrad() is called.

#ifndef KWSDC_NN_TENSOR_H_
#define KWSDC_NN_TENSOR_H_

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "kwsdc/error.h"

namespace kwsdc::nn {

using Shape = std::vector<int>;

inline size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), size_t{1},
                         [](size_t acc, int d) { return acc * static_cast<size_t>(d); });
}

inline std::string ShapeString(const Shape& shape) {
  std::string out = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Graph recording is disabled while a NoGradGuard is alive on this thread.
inline bool& GradModeFlag() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradModeFlag()) { GradModeFlag() = false; }
  ~NoGradGuard() { GradModeFlag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void EnsureGrad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
using MatrixMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  static Tensor Zeros(const Shape& shape, bool requires_grad = false) {
    return FromValues(shape, std::vector<T>(NumElements(shape), T(0)),
                      requires_grad);
  }

  static Tensor Full(const Shape& shape, T fill, bool requires_grad = false) {
    return FromValues(shape, std::vector<T>(NumElements(shape), fill),
                      requires_grad);
  }

  static Tensor FromValues(const Shape& shape, std::vector<T> values,
                           bool requires_grad = false) {
    if (NumElements(shape) != values.size())
      Fail(ErrorCode::kShapeError, "shape " + ShapeString(shape) + " holds " +
                                       std::to_string(NumElements(shape)) +
                                       " values, got " +
                                       std::to_string(values.size()));
    auto node = std::make_shared<Node<T>>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  // Result of an operation. The backward closure is only kept when grad mode
  // is on and at least one input requires a gradient.
  static Tensor FromOp(const Shape& shape, std::vector<T> values,
                       std::vector<std::shared_ptr<Node<T>>> parents,
                       std::function<void(Node<T>&)> backward) {
    Tensor out = FromValues(shape, std::move(values));
    if (!GradModeFlag()) return out;
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const auto& p) { return p->requires_grad; });
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents = std::move(parents);
    out.node_->backward = std::move(backward);
    return out;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(size_t i) const { return node_->shape.at(i); }
  size_t rank() const { return node_->shape.size(); }
  size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  // Empty until a backward pass reaches this tensor.
  std::span<const T> grad() const { return node_->grad; }
  std::vector<T>& mutable_grad() {
    node_->EnsureGrad();
    return node_->grad;
  }

  T item() const {
    if (size() != 1)
      Fail(ErrorCode::kShapeError, "item() on tensor of shape " +
                                       ShapeString(shape()));
    return node_->value[0];
  }

  T& at(size_t i) { return node_->value.at(i); }
  T at(size_t i) const { return node_->value.at(i); }

  // Rank-2 view (rows x cols) of the values.
  MatrixMap<T> matrix() {
    return MatrixMap<T>(node_->value.data(), node_->shape.at(0),
                        static_cast<Eigen::Index>(size() / node_->shape.at(0)));
  }
  ConstMatrixMap<T> matrix() const {
    return ConstMatrixMap<T>(node_->value.data(), node_->shape.at(0),
                             static_cast<Eigen::Index>(size() / node_->shape.at(0)));
  }

  void ZeroGrad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  // Reverse-mode pass from this scalar (or from a tensor with the given seed
  // gradient).
  void Backward() {
    if (size() != 1)
      Fail(ErrorCode::kShapeError, "Backward() needs a scalar, got " +
                                       ShapeString(shape()));
    Backward(std::vector<T>{T(1)});
  }

  void Backward(const std::vector<T>& seed) {
    if (seed.size() != size())
      Fail(ErrorCode::kShapeError, "backward seed size mismatch");
    if (!node_->requires_grad) return;
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    TopoSort(node_.get(), visited, order);
    node_->EnsureGrad();
    for (size_t i = 0; i < seed.size(); ++i) node_->grad[i] += seed[i];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* node = *it;
      if (node->backward && !node->grad.empty()) node->backward(*node);
    }
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  // Same values, no history, no gradient.
  Tensor Detach() const { return FromValues(shape(), values(), false); }

 private:
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static void TopoSort(Node<T>* root, std::unordered_set<Node<T>*>& visited,
                       std::vector<Node<T>*>& order) {
    // Iterative post-order DFS; recurrent graphs can be thousands deep.
    std::vector<std::pair<Node<T>*, size_t>> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node<T>* parent = node->parents[next++].get();
        if (parent->requires_grad && visited.insert(parent).second)
          stack.push_back({parent, 0});
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node<T>> node_;
};

// Gradient buffer of a parent if it participates in differentiation,
// otherwise nullptr.
template <typename T>
T* GradOf(const std::shared_ptr<Node<T>>& node) {
  if (!node->requires_grad) return nullptr;
  node->EnsureGrad();
  return node->grad.data();
}

}  // namespace kwsdc::nn

#endif  // KWSDC_NN_TENSOR_H_
