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

namespace sparsecollapse {

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-5;
  double eps = 1e-8;
};

/// Decoupled weight decay Adam with bias correction. Applies to trainable
/// parameters only and increments the store's step counter once per call.
void adamw_step(ParamStore& params, const AdamWConfig& config);

/// Rescales all trainable gradients so their joint L2 norm is at most
/// max_norm. Returns the norm measured before clipping.
double clip_global_norm(ParamStore& params, double max_norm);

/// Joint L2 norm of trainable gradients.
double global_grad_norm(const ParamStore& params);

}  // namespace sparsecollapse
