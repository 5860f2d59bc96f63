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
#include "sparsecollapse/model/hybrid_model.hpp"
#include "sparsecollapse/nn/optim.hpp"
#include "sparsecollapse/sparsity/sparsity_control.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsecollapse {

/// Invalid configuration: unknown key, bad type or violated constraint.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageEpochs {
  int stage1 = 30;
  int stage2 = 10;
  int stage3 = 50;
  int extended = 100;
};

struct TrainingConfig {
  int batch_size = 128;
  double free_bits = 5.0;
  /// L1 weight on top-k codes (stage 2 and top-k joint training).
  double lambda_sparse = 0.01;
  double clip_norm = 1.0;
  double weight_elbo = 1.0;
  double weight_sae_feature = 1.0;
  double weight_sae_latent = 1.0;
};

struct SparsityControlConfig {
  double b_base = 0.1;
  BoostCountMode boost_mode = BoostCountMode::Rate;
  RevivalConfig revival;
};

struct MetricsConfig {
  int bins = 20;
  int eval_samples = 10000;
  double specialization_threshold = 0.5;
  double dead_threshold = 0.001;
  std::vector<double> spec_sweep = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<double> dead_sweep = {0.0005, 0.001, 0.002, 0.005, 0.01};
};

struct SuiteConfig {
  /// Empty lists fall back to the top-level preset / method.
  std::vector<Preset> presets;
  std::vector<SparsityMethod> methods;
  bool include_extended = false;
  /// Concurrent runs; 0 picks the hardware concurrency.
  int jobs = 0;
};

/// Everything that determines a run. Defaults are the desk-scale protocol.
struct ExperimentConfig {
  Preset preset = Preset::MiniGray;
  SparsityMethod method = SparsityMethod::TopK;
  std::vector<int> seeds = {42, 43, 44};
  ScheduleConfig schedule;
  StageEpochs stages;
  AdamWConfig optimizer;
  TrainingConfig training;
  int hidden_dim = 256;
  int feature_dim = 128;
  int overcomplete = 2;
  bool tied_weights = true;
  SparsityControlConfig sparsity;
  MetricsConfig metrics;
  SuiteConfig suite;

  /// Throws ConfigError naming the key and constraint.
  void validate() const;

  [[nodiscard]] ModelConfig model_config(Preset for_preset) const;
  [[nodiscard]] std::vector<Preset> suite_presets() const;
  [[nodiscard]] std::vector<SparsityMethod> suite_methods() const;
};

/// Nested JSON with every resolved value; key order is sorted, so the dump
/// is canonical.
nlohmann::json to_json(const ExperimentConfig& config);
/// Inverse of to_json; expects every key (use parse_config for user input).
ExperimentConfig from_json(const nlohmann::json& j);

std::string canonical_config(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);
std::string hash_hex(std::uint64_t hash);

/// Dotted-key view of a nested JSON object ("schedule.k_min" -> 8).
std::map<std::string, nlohmann::json> flatten(const nlohmann::json& j);
nlohmann::json unflatten(const std::map<std::string, nlohmann::json>& flat);

}  // namespace sparsecollapse
