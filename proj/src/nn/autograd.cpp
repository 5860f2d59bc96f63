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

#include "sparsecollapse/nn/autograd.hpp"

#include <utility>

namespace sparsecollapse {

const Tensor& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

double Var::scalar() const {
  if (value().size() != 1) {
    throw ContractError("Var::scalar: node has shape " + shape_string(value()));
  }
  return value()(0, 0);
}

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::param(ParamStore& store, const std::string& name) {
  Parameter& p = store.at(name);
  Node node;
  node.value = p.value;
  if (p.trainable && recording_) {
    node.requires_grad = true;
    node.param = &p;
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<std::size_t> parents, Backprop backprop) {
  Node node;
  node.value = std::move(value);
  if (recording_) {
    for (const auto id : parents) {
      if (nodes_[id].requires_grad) {
        node.requires_grad = true;
        break;
      }
    }
    if (node.requires_grad) node.backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

void Graph::accumulate(std::size_t id, const Tensor& grad) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (grad.rows() != node.value.rows() || grad.cols() != node.value.cols()) {
    throw DimensionError("gradient " + shape_string(grad) + " does not match node " +
                         shape_string(node.value));
  }
  if (node.has_grad) {
    node.grad += grad;
  } else {
    node.grad = grad;
    node.has_grad = true;
  }
}

void Graph::backward(const Var& loss) {
  if (&loss.graph() != this) throw ContractError("backward: loss belongs to another graph");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_string(loss.value()));
  }
  if (!nodes_[loss.id()].requires_grad) return;
  accumulate(loss.id(), Tensor::Ones(1, 1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad) continue;
    if (node.param != nullptr) node.param->grad += node.grad;
    if (node.backprop) {
      // The closure may append to other nodes' grads but never to this one.
      const Tensor upstream = std::move(node.grad);
      node.grad = Tensor();
      node.has_grad = false;
      node.backprop(*this, upstream);
    }
  }
}

void backward(const Var& loss) { loss.graph().backward(loss); }

namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.value()) +
                         " vs " + shape_string(b.value()));
  }
}

template <typename Fn>
Var unary(const Var& x, Tensor value, Fn&& local_grad) {
  const std::size_t xi = x.id();
  return x.graph().record(std::move(value), {xi},
                          [xi, local_grad = std::forward<Fn>(local_grad)](
                              Graph& g, const Tensor& up) { g.accumulate(xi, local_grad(g, up)); });
}

}  // namespace

Var affine(const Var& input, const Var& weight) {
  if (input.cols() != weight.cols()) {
    throw DimensionError("affine: input " + shape_string(input.value()) +
                         " incompatible with weight " + shape_string(weight.value()));
  }
  Tensor out = input.value() * weight.value().transpose();
  const std::size_t xi = input.id();
  const std::size_t wi = weight.id();
  return input.graph().record(std::move(out), {xi, wi}, [xi, wi](Graph& g, const Tensor& up) {
    if (g.requires_grad(xi)) g.accumulate(xi, up * g.value(wi));
    if (g.requires_grad(wi)) g.accumulate(wi, up.transpose() * g.value(xi));
  });
}

Var affine(const Var& input, const Var& weight, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != weight.rows()) {
    throw DimensionError("affine: bias " + shape_string(bias.value()) + " incompatible with weight " +
                         shape_string(weight.value()));
  }
  return add_row(affine(input, weight), bias);
}

Var transpose(const Var& x) {
  return unary(x, x.value().transpose(),
               [](Graph&, const Tensor& up) -> Tensor { return up.transpose(); });
}

Var relu(const Var& x) {
  const std::size_t xi = x.id();
  return unary(x, x.value().cwiseMax(0.0), [xi](Graph& g, const Tensor& up) -> Tensor {
    return (g.value(xi).array() > 0.0).select(up, 0.0);
  });
}

Var sigmoid(const Var& x) {
  Tensor y = (1.0 + (-x.value().array()).exp()).inverse().matrix();
  Var out = unary(x, y, [y](Graph&, const Tensor& up) -> Tensor {
    return (up.array() * y.array() * (1.0 - y.array())).matrix();
  });
  return out;
}

Var exp(const Var& x) {
  Tensor y = x.value().array().exp().matrix();
  return unary(x, y, [y](Graph&, const Tensor& up) -> Tensor { return up.cwiseProduct(y); });
}

Var square(const Var& x) {
  const std::size_t xi = x.id();
  return unary(x, x.value().cwiseAbs2(), [xi](Graph& g, const Tensor& up) -> Tensor {
    return 2.0 * up.cwiseProduct(g.value(xi));
  });
}

Var abs(const Var& x) {
  const std::size_t xi = x.id();
  return unary(x, x.value().cwiseAbs(), [xi](Graph& g, const Tensor& up) -> Tensor {
    return (up.array() * g.value(xi).array().sign()).matrix();
  });
}

Var clamp(const Var& x, double lo, double hi) {
  const std::size_t xi = x.id();
  return unary(x, x.value().cwiseMax(lo).cwiseMin(hi),
               [xi, lo, hi](Graph& g, const Tensor& up) -> Tensor {
                 const auto& v = g.value(xi).array();
                 return ((v > lo) && (v < hi)).select(up, 0.0);
               });
}

Var max_scalar(const Var& x, double floor) {
  const std::size_t xi = x.id();
  return unary(x, x.value().cwiseMax(floor), [xi, floor](Graph& g, const Tensor& up) -> Tensor {
    return (g.value(xi).array() > floor).select(up, 0.0);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  const std::size_t ai = a.id();
  const std::size_t bi = b.id();
  return a.graph().record(a.value() + b.value(), {ai, bi}, [ai, bi](Graph& g, const Tensor& up) {
    g.accumulate(ai, up);
    g.accumulate(bi, up);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  const std::size_t ai = a.id();
  const std::size_t bi = b.id();
  return a.graph().record(a.value() - b.value(), {ai, bi}, [ai, bi](Graph& g, const Tensor& up) {
    g.accumulate(ai, up);
    if (g.requires_grad(bi)) g.accumulate(bi, Tensor(-up));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  const std::size_t ai = a.id();
  const std::size_t bi = b.id();
  return a.graph().record(a.value().cwiseProduct(b.value()), {ai, bi},
                          [ai, bi](Graph& g, const Tensor& up) {
                            if (g.requires_grad(ai)) g.accumulate(ai, up.cwiseProduct(g.value(bi)));
                            if (g.requires_grad(bi)) g.accumulate(bi, up.cwiseProduct(g.value(ai)));
                          });
}

Var scale(const Var& x, double factor) {
  return unary(x, factor * x.value(),
               [factor](Graph&, const Tensor& up) -> Tensor { return factor * up; });
}

Var add_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionError("add_row: row " + shape_string(row.value()) + " incompatible with " +
                         shape_string(x.value()));
  }
  Tensor out = x.value().rowwise() + row.value().row(0);
  const std::size_t xi = x.id();
  const std::size_t ri = row.id();
  return x.graph().record(std::move(out), {xi, ri}, [xi, ri](Graph& g, const Tensor& up) {
    g.accumulate(xi, up);
    if (g.requires_grad(ri)) g.accumulate(ri, Tensor(up.colwise().sum()));
  });
}

Var sum(const Var& x) {
  Tensor out(1, 1);
  out(0, 0) = x.value().sum();
  const Eigen::Index r = x.rows();
  const Eigen::Index c = x.cols();
  return unary(x, std::move(out), [r, c](Graph&, const Tensor& up) -> Tensor {
    return Tensor::Constant(r, c, up(0, 0));
  });
}

Var mean(const Var& x) {
  const auto n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var mean_rows(const Var& x) {
  const auto n = static_cast<double>(x.rows());
  Tensor out = x.value().colwise().sum() / n;
  const Eigen::Index r = x.rows();
  return unary(x, std::move(out), [r, n](Graph&, const Tensor& up) -> Tensor {
    return (up / n).replicate(r, 1);
  });
}

}  // namespace sparsecollapse
