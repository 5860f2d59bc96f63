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

#include "sparsecollapse/nn/optim.hpp"

#include <cmath>

namespace sparsecollapse {

void adamw_step(ParamStore& params, const AdamWConfig& config) {
  params.set_step(params.step() + 1);
  const double t = static_cast<double>(params.step());
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);

  for (auto& [name, p] : params.entries()) {
    if (!p.trainable) continue;
    p.value *= (1.0 - config.lr * config.weight_decay);
    p.m = config.beta1 * p.m + (1.0 - config.beta1) * p.grad;
    p.v = config.beta2 * p.v + (1.0 - config.beta2) * p.grad.cwiseAbs2();
    p.value.array() -=
        config.lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + config.eps);
  }
}

double global_grad_norm(const ParamStore& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params.entries()) {
    if (p.trainable) sq += p.grad.squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_global_norm(ParamStore& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, p] : params.entries()) {
      if (p.trainable) p.grad *= factor;
    }
  }
  return norm;
}

}  // namespace sparsecollapse
