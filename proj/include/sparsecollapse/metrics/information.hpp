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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sparsecollapse {

/// Equal-count discretisation. Edges are the sample quantiles
/// sorted[floor(b N / bins)], b = 1..bins-1, and a value's bin is the number
/// of edges <= it. Tied values always share a bin, so a constant input maps
/// to a single bin and a strictly monotone transform leaves the binning
/// unchanged.
std::vector<int> quantile_bins(std::span<const double> x, int bins);

/// Plug-in entropy (nats) of a discrete sample.
double discrete_entropy(std::span<const int> x);

/// Plug-in mutual information (nats) from the joint histogram of two
/// discrete samples: sum p(i,j) ln(p(i,j) / (p(i) p(j))). Never negative.
double discrete_mutual_information(std::span<const int> x, std::span<const int> y);

/// I(x; y) with x quantile-binned into `bins` cells. Requires N >= bins.
double estimate_mi(std::span<const double> x, std::span<const int> y, int bins);

template <typename Derived>
std::vector<double> column_values(const Eigen::DenseBase<Derived>& m, Eigen::Index col) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = static_cast<double>(m(r, col));
  return out;
}

std::vector<int> label_column(const IndexMatrix& labels, Eigen::Index col);

struct MigResult {
  double mig = 0.0;
  /// Normalised gap per factor; NaN for excluded factors.
  std::vector<double> gaps;
  std::vector<std::string> warnings;
};

/// MIG from a precomputed [F x L] MI matrix and factor entropies. Factors
/// with zero entropy are excluded. With a single latent the runner-up MI is 0.
MigResult mig_from_mi(const Tensor& mi, std::span<const double> entropies);

/// Mean over factors of (I(z_j1; v) - I(z_j2; v)) / H(v), j1 and j2 the two
/// latents most informative about v.
MigResult mig_score(const Tensor& latents, const IndexMatrix& labels, int bins);

/// Per-neuron statistics reused by every threshold of a sweep.
struct NeuronStats {
  /// max_f I(a_i; v_f) / H(v_f).
  std::vector<double> best_normalized_mi;
  /// Index of the argmax factor, -1 for silent neurons.
  std::vector<int> best_factor;
  /// Fraction of samples with a_i > 0.
  std::vector<double> activation_rate;
};

NeuronStats neuron_stats(const Tensor& codes, const IndexMatrix& labels, int bins);

struct SpecializationResult {
  int count = 0;
  std::vector<double> per_neuron_best_mi;
};

/// A neuron is specialised when its best normalised MI with any single
/// factor exceeds `threshold`.
SpecializationResult specialization_count(const Tensor& codes, const IndexMatrix& labels,
                                          double threshold, int bins);
int specialization_count(const NeuronStats& stats, double threshold);

struct DeadRateResult {
  double rate = 0.0;
  std::vector<bool> flags;
};

/// A neuron is dead when it fires (a_i > 0) on fewer than
/// activation_threshold of the samples.
DeadRateResult dead_rate(const Tensor& codes, double activation_threshold);
DeadRateResult dead_rate(const NeuronStats& stats, double activation_threshold);

struct SweepTable {
  std::vector<double> spec_thresholds;
  std::vector<int> specialized;
  std::vector<double> dead_thresholds;
  std::vector<double> dead_rates;
};

inline const std::vector<double> kDefaultSpecThresholds = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
inline const std::vector<double> kDefaultDeadThresholds = {0.0005, 0.001, 0.002, 0.005, 0.01};

/// Evaluates both criteria at every threshold from one pass of MI
/// estimation. Output rows are sorted by ascending threshold.
SweepTable threshold_sweep(const Tensor& codes, const IndexMatrix& labels,
                           std::vector<double> spec_thresholds, std::vector<double> dead_thresholds,
                           int bins);

template <typename DerivedA, typename DerivedB>
double reconstruction_mse(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw DimensionError("reconstruction_mse: " + shape_string(x) + " vs " + shape_string(x_hat));
  }
  if (x.size() == 0) return 0.0;
  return (x - x_hat).squaredNorm() / static_cast<double>(x.size());
}

/// Evaluation-set activations for offline analysis.
struct ActivationDump {
  Tensor codes;        ///< [N x m] post-sparsification feature codes
  Tensor latents;      ///< [N x 10] posterior means
  IndexMatrix labels;  ///< [N x F]
  std::vector<int> cardinalities;

  [[nodiscard]] Eigen::Index size() const { return codes.rows(); }
  /// Throws ContractError on inconsistent shapes or out-of-range labels.
  void validate() const;
};

/// Binary layout: see docs/file-formats.md ("Activation dump").
void write_activation_dump(const ActivationDump& dump, const std::filesystem::path& path);
ActivationDump read_activation_dump(const std::filesystem::path& path);

}  // namespace sparsecollapse
