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

#include "sparsecollapse/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace sparsecollapse {

/// A named trainable tensor with its gradient and AdamW moments.
struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  /// Frozen parameters enter graphs as constants and are skipped by the
  /// optimizer and by gradient clipping.
  bool trainable = true;

  void zero_grad() { grad.setZero(); }
  void reset_moments() {
    m.setZero();
    v.setZero();
  }
};

/// Owns every parameter of a model, keyed by a dotted path such as
/// "vae.enc1.weight". Iteration order is lexicographic, so anything that
/// walks the store (optimizer, checkpoint writer) is deterministic.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);

  [[nodiscard]] bool contains(const std::string& name) const;
  Parameter& at(const std::string& name);
  [[nodiscard]] const Parameter& at(const std::string& name) const;

  void zero_grad();
  /// Marks every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable);

  [[nodiscard]] std::vector<std::string> names() const;
  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] std::size_t num_scalars() const;

  std::map<std::string, Parameter>& entries() { return params_; }
  [[nodiscard]] const std::map<std::string, Parameter>& entries() const { return params_; }

  [[nodiscard]] std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

 private:
  std::map<std::string, Parameter> params_;
  std::uint64_t step_ = 0;
};

}  // namespace sparsecollapse
