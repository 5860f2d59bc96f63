/*
 * Copyright 2026 The sparsecollapse Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "sparsecollapse/nn/param_store.hpp"
#include "sparsecollapse/nn/tensor.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace sparsecollapse {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] Graph& graph() const { return *graph_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] bool requires_grad() const;
  /// Value of a [1 x 1] node.
  [[nodiscard]] double scalar() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. A fresh graph is built for every forward pass; values
/// are computed eagerly as nodes are appended, and backward() walks the tape
/// in reverse accumulating into node gradients and, for parameter leaves,
/// into the owning ParamStore.
///
/// With recording disabled no backward closures are stored; used for
/// evaluation passes.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a stored parameter. Frozen parameters become constants.
  Var param(ParamStore& store, const std::string& name);

  using Backprop = std::function<void(Graph&, const Tensor& out_grad)>;
  /// Appends a node computed from `parents`. `backprop` receives the node's
  /// upstream gradient and must push contributions through accumulate().
  Var record(Tensor value, std::vector<std::size_t> parents, Backprop backprop);

  void accumulate(std::size_t id, const Tensor& grad);
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& grad) {
    accumulate(id, Tensor(grad));
  }

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] bool recording() const { return recording_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// d(loss)/d(param) is added to every reachable trainable parameter's
  /// gradient. Gradients accumulate across calls until zeroed on the store.
  void backward(const Var& loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backprop backprop;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  bool recording_;
};

void backward(const Var& loss);

// Differentiable operations. Shapes follow the [batch x features] convention.

/// out[b, j] = sum_i weight[j, i] * input[b, i] + bias[j]; bias is [1 x d_out].
Var affine(const Var& input, const Var& weight, const Var& bias);
/// As above without a bias term.
Var affine(const Var& input, const Var& weight);
Var transpose(const Var& x);
/// Elementwise max(0, x); the subgradient at 0 is 0.
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var square(const Var& x);
Var abs(const Var& x);
/// Clamps into [lo, hi]; gradient passes only strictly inside the interval.
Var clamp(const Var& x, double lo, double hi);
/// Elementwise max(x, floor); gradient passes where x > floor.
Var max_scalar(const Var& x, double floor);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise (Hadamard) product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
/// Adds a [1 x n] row to every row of x.
Var add_row(const Var& x, const Var& row);

/// Sum of all entries, [1 x 1].
Var sum(const Var& x);
/// Mean of all entries, [1 x 1].
Var mean(const Var& x);
/// Column means over the batch, [1 x n].
Var mean_rows(const Var& x);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& x) { return scale(x, s); }

}  // namespace sparsecollapse
