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

#include "sparsecollapse/nn/param_store.hpp"

#include <stdexcept>

namespace sparsecollapse {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name) != 0) {
    throw ContractError("ParamStore: duplicate parameter '" + name + "'");
  }
  Parameter p;
  p.grad = Tensor::Zero(init.rows(), init.cols());
  p.m = Tensor::Zero(init.rows(), init.cols());
  p.v = Tensor::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) != 0; }

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& [name, p] : params_) {
    if (name.starts_with(prefix)) p.trainable = trainable;
  }
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

}  // namespace sparsecollapse
