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

#include "sparsecollapse/data/factor_dataset.hpp"
#include "sparsecollapse/metrics/information.hpp"
#include "sparsecollapse/model/hybrid_model.hpp"

#include <span>
#include <vector>

namespace sparsecollapse {

/// Headline numbers of one evaluation.
struct MetricReport {
  int epoch = 0;
  double mig = 0.0;
  int specialized_count = 0;
  double dead_rate = 0.0;
  double mse = 0.0;
  double effective_sparsity = 0.0;
  /// Current k (top-k) or lambda (L1).
  double k_or_lambda = 0.0;

  [[nodiscard]] bool finite() const;
};

struct EvalSettings {
  int bins = 20;
  int samples = 10000;
  double specialization_threshold = 0.5;
  double dead_threshold = 0.001;
  SparsityMode feature_mode;
  SparsityMode latent_mode;
};

/// `count` rows drawn with replacement from the validation split.
std::vector<int> draw_eval_sample(const FactorDataset& dataset, int count, Rng rng);

struct Evaluation {
  MetricReport report;
  ActivationDump dump;
  std::vector<bool> feature_dead;
  std::vector<bool> latent_dead;
  double latent_dead_rate = 0.0;
  /// Largest per-neuron normalised MI of the feature SAE.
  double max_normalized_mi = 0.0;
  int latent_specialized = 0;
};

/// Deterministic (eps = 0) forward pass over the sample: MIG on posterior
/// means, specialisation and dead rate on the feature SAE's codes, latent
/// SAE statistics on its codes of mu, and reconstruction MSE. The model is
/// snapshotted; the caller's copy is never touched.
Evaluation evaluate(const HybridModel& model, const FactorDataset& dataset,
                    std::span<const int> sample, const EvalSettings& settings);

}  // namespace sparsecollapse
