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

#include "sparsecollapse/metrics/evaluate.hpp"

#include <algorithm>
#include <cmath>

namespace sparsecollapse {

bool MetricReport::finite() const {
  return std::isfinite(mig) && std::isfinite(dead_rate) && std::isfinite(mse) &&
         std::isfinite(effective_sparsity) && std::isfinite(k_or_lambda);
}

std::vector<int> draw_eval_sample(const FactorDataset& dataset, int count, Rng rng) {
  const auto& pool = dataset.validation;
  if (pool.empty()) throw ContractError("draw_eval_sample: empty validation split");
  std::vector<int> rows(static_cast<std::size_t>(count));
  for (auto& r : rows) r = pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))];
  return rows;
}

Evaluation evaluate(const HybridModel& model, const FactorDataset& dataset,
                    std::span<const int> sample, const EvalSettings& settings) {
  if (sample.empty()) throw ContractError("evaluate: empty evaluation sample");
  HybridModel snapshot = model;

  // Forward each distinct image once; the sample is a multiset over them.
  std::vector<int> unique(sample.begin(), sample.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  const Batch batch = gather(dataset, unique);

  Graph g(false);
  const EncoderOutput enc = vae_encode(g, snapshot, batch.images);
  const Var x_hat = vae_decode(g, snapshot, enc.mu);
  const Var a = sae_encode(g, snapshot.params(), snapshot.sae_feature(), enc.h);
  const Tensor codes_u = settings.feature_mode.method == SparsityMethod::TopK
                             ? topk_sparsify(a.value(), settings.feature_mode.k)
                             : a.value();
  const Var al = sae_encode(g, snapshot.params(), snapshot.sae_latent(), enc.mu);
  const Tensor latent_codes_u = settings.latent_mode.method == SparsityMethod::TopK
                                    ? topk_sparsify(al.value(), settings.latent_mode.k)
                                    : al.value();
  const Tensor sq_err_u = (x_hat.value() - batch.images).rowwise().squaredNorm();

  const auto n = static_cast<Eigen::Index>(sample.size());
  Evaluation out;
  ActivationDump& dump = out.dump;
  dump.codes.resize(n, codes_u.cols());
  dump.latents.resize(n, enc.mu.cols());
  dump.labels.resize(n, dataset.labels.cols());
  Tensor latent_codes(n, latent_codes_u.cols());
  double sq_err = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int row = sample[static_cast<std::size_t>(i)];
    const auto u = std::lower_bound(unique.begin(), unique.end(), row) - unique.begin();
    dump.codes.row(i) = codes_u.row(u);
    dump.latents.row(i) = enc.mu.value().row(u);
    dump.labels.row(i) = dataset.labels.row(row);
    latent_codes.row(i) = latent_codes_u.row(u);
    sq_err += sq_err_u(u, 0);
  }
  for (const auto& spec : dataset.specs) dump.cardinalities.push_back(spec.cardinality());

  const NeuronStats stats = neuron_stats(dump.codes, dump.labels, settings.bins);
  const DeadRateResult dead = dead_rate(stats, settings.dead_threshold);
  const NeuronStats latent_stats = neuron_stats(latent_codes, dump.labels, settings.bins);
  const DeadRateResult latent_dead = dead_rate(latent_stats, settings.dead_threshold);

  MetricReport& r = out.report;
  r.mig = mig_score(dump.latents, dump.labels, settings.bins).mig;
  r.specialized_count = specialization_count(stats, settings.specialization_threshold);
  r.dead_rate = dead.rate;
  r.mse = sq_err / (static_cast<double>(n) * static_cast<double>(batch.images.cols()));
  r.effective_sparsity = effective_sparsity(dump.codes);
  r.k_or_lambda = settings.feature_mode.method == SparsityMethod::TopK
                      ? static_cast<double>(settings.feature_mode.k)
                      : settings.feature_mode.lambda;
  out.feature_dead = dead.flags;
  out.latent_dead = latent_dead.flags;
  out.latent_dead_rate = latent_dead.rate;
  for (const double v : stats.best_normalized_mi) out.max_normalized_mi = std::max(out.max_normalized_mi, v);
  out.latent_specialized = specialization_count(latent_stats, settings.specialization_threshold);
  return out;
}

}  // namespace sparsecollapse
