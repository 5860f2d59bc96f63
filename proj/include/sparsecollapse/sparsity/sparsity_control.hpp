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

#include "sparsecollapse/model/hybrid_model.hpp"
#include "sparsecollapse/nn/param_store.hpp"
#include "sparsecollapse/nn/rng.hpp"
#include "sparsecollapse/nn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sparsecollapse {

struct ScheduleConfig {
  int k_max = 64;
  int k_min = 8;
  int warmup_epochs = 5;
  int anneal_end_epoch = 45;
  int total_epochs = 50;
  double lambda_start = 0.001;
  double lambda_end = 0.1;
  double beta_start = 0.1;
  double beta_end = 1.0;

  /// Throws ContractError naming the violated constraint.
  void validate() const;

  /// 500 -> 50 over warmup 5, anneal end 45, 50 epochs.
  static ScheduleConfig paper_scale();
};

/// Active-neuron budget at epoch t: k_max during warmup, k_min from
/// anneal_end on, and a half-cosine anneal in between,
///   k = round(k_min + (k_max - k_min) * (1 + cos(pi * tau)) / 2),
///   tau = (t - warmup) / (anneal_end - warmup).
int schedule_k(int t, const ScheduleConfig& cfg);

/// Linear L1 coefficient from lambda_start (t = 0) to lambda_end (t = total),
/// held at the endpoints outside that range.
double schedule_lambda(int t, const ScheduleConfig& cfg);

/// Cosine KL warm-up from beta_start (t = 0) to beta_end (t = span).
double schedule_beta(int t, int span, const ScheduleConfig& cfg);

/// Budget of the latent SAE, scaled by dictionary size:
/// max(1, round(k * m_latent / m_feature)).
int latent_k(int k, int latent_dict_size, int feature_dict_size);

enum class BoostCountMode { Rate, Raw };

std::string_view boost_mode_name(BoostCountMode mode);
BoostCountMode parse_boost_mode(std::string_view text);

/// Per-neuron firing bookkeeping of one SAE across training epochs.
struct SparsityState {
  explicit SparsityState(int dict_size = 0);

  /// Firings (a_tilde > 0) in the current epoch.
  std::vector<std::int64_t> epoch_counts;
  /// Firings since tracking started (start of joint training).
  std::vector<std::int64_t> cumulative_counts;
  std::vector<int> epochs_inactive;
  /// Set from the latest evaluation.
  std::vector<bool> dead;
  Tensor boost;
  /// Training samples seen in the current epoch.
  std::int64_t epoch_samples = 0;
  /// Completed tracked epochs.
  int epochs_elapsed = 0;
  /// Mean training firing rate of each completed epoch.
  std::vector<double> rate_history;
  std::string last_warning;

  [[nodiscard]] int size() const { return static_cast<int>(epoch_counts.size()); }

  /// Adds the firings of one batch of codes [B x m].
  void record_batch(const Tensor& codes);
  /// Closes the epoch: folds counts into the cumulative totals and updates
  /// the inactivity counters.
  void end_epoch();
  [[nodiscard]] double dead_fraction() const;
};

/// boost_i = b_base * exp(-0.01 * c_i / t). In Rate mode c_i is divided by
/// the samples per epoch so that c_i / t is a firing rate. `t` is the number
/// of tracked epochs completed and must be >= 1.
Tensor update_bias_boost(const SparsityState& state, int t, double b_base, BoostCountMode mode,
                         std::int64_t samples_per_epoch);

struct RevivalConfig {
  /// Revival runs only when the dead fraction strictly exceeds this.
  double dead_rate_gate = 0.5;
  /// Neurons must have been silent for strictly more epochs than this.
  int inactive_epochs = 5;
  /// Noise std relative to the std of all active dictionary entries.
  double noise_scale = 0.01;
};

/// Re-seeds stale dead neurons from randomly chosen active ones. Returns the
/// number of neurons reinitialised; 0 when the gate is closed or no active
/// neuron exists (the latter sets state.last_warning).
int revive_dead_neurons(SparsityState& state, const SaeParams& sae, ParamStore& params, Rng& rng,
                        const RevivalConfig& config = {});

}  // namespace sparsecollapse
