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

#include "sparsecollapse/sparsity/sparsity_control.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sparsecollapse {

void ScheduleConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("schedule: " + what); };
  if (k_min < 1) fail("k_min must be >= 1 (got " + std::to_string(k_min) + ")");
  if (k_max < k_min) {
    fail("k_min must not exceed k_max (k_min=" + std::to_string(k_min) +
         ", k_max=" + std::to_string(k_max) + ")");
  }
  if (warmup_epochs < 0) fail("warmup_epochs must be >= 0");
  if (warmup_epochs >= anneal_end_epoch) fail("warmup_epochs must be < anneal_end_epoch");
  if (anneal_end_epoch > total_epochs) fail("anneal_end_epoch must be <= total_epochs");
  if (!(lambda_start >= 0.0) || !(lambda_end >= 0.0)) fail("lambda bounds must be >= 0");
  if (!(beta_start > 0.0) || !(beta_end >= beta_start)) {
    fail("beta must satisfy 0 < beta_start <= beta_end");
  }
}

ScheduleConfig ScheduleConfig::paper_scale() {
  ScheduleConfig cfg;
  cfg.k_max = 500;
  cfg.k_min = 50;
  return cfg;
}

int schedule_k(int t, const ScheduleConfig& cfg) {
  if (t < cfg.warmup_epochs) return cfg.k_max;
  if (t >= cfg.anneal_end_epoch) return cfg.k_min;
  // Half-cosine over the normalised phase tau: k_max at the warmup joint,
  // k_min at anneal end.
  const double tau = static_cast<double>(t - cfg.warmup_epochs) /
                     static_cast<double>(cfg.anneal_end_epoch - cfg.warmup_epochs);
  const double k = cfg.k_min + (cfg.k_max - cfg.k_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * tau));
  return static_cast<int>(std::lround(k));
}

double schedule_lambda(int t, const ScheduleConfig& cfg) {
  const int clamped = std::clamp(t, 0, cfg.total_epochs);
  return cfg.lambda_start +
         (cfg.lambda_end - cfg.lambda_start) * static_cast<double>(clamped) / cfg.total_epochs;
}

double schedule_beta(int t, int span, const ScheduleConfig& cfg) {
  if (span <= 0) return cfg.beta_start;
  const double frac = std::clamp(static_cast<double>(t) / span, 0.0, 1.0);
  return cfg.beta_end -
         (cfg.beta_end - cfg.beta_start) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

int latent_k(int k, int latent_dict_size, int feature_dict_size) {
  const double scaled = static_cast<double>(k) * latent_dict_size / feature_dict_size;
  return std::max(1, static_cast<int>(std::lround(scaled)));
}

std::string_view boost_mode_name(BoostCountMode mode) {
  return mode == BoostCountMode::Rate ? "rate" : "raw";
}

BoostCountMode parse_boost_mode(std::string_view text) {
  if (text == "rate") return BoostCountMode::Rate;
  if (text == "raw") return BoostCountMode::Raw;
  throw std::invalid_argument("unknown boost_count_mode '" + std::string(text) +
                              "' (expected rate or raw)");
}

SparsityState::SparsityState(int dict_size)
    : epoch_counts(static_cast<std::size_t>(dict_size), 0),
      cumulative_counts(static_cast<std::size_t>(dict_size), 0),
      epochs_inactive(static_cast<std::size_t>(dict_size), 0),
      dead(static_cast<std::size_t>(dict_size), false),
      boost(Tensor::Zero(1, dict_size)) {}

void SparsityState::record_batch(const Tensor& codes) {
  if (codes.cols() != size()) {
    throw DimensionError("SparsityState: codes " + shape_string(codes) + " for " +
                         std::to_string(size()) + " neurons");
  }
  for (Eigen::Index j = 0; j < codes.cols(); ++j) {
    epoch_counts[static_cast<std::size_t>(j)] += (codes.col(j).array() > 0.0).count();
  }
  epoch_samples += codes.rows();
}

void SparsityState::end_epoch() {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < epoch_counts.size(); ++i) {
    cumulative_counts[i] += epoch_counts[i];
    total += epoch_counts[i];
    epochs_inactive[i] = epoch_counts[i] > 0 ? 0 : epochs_inactive[i] + 1;
    epoch_counts[i] = 0;
  }
  const double denom = static_cast<double>(std::max<std::int64_t>(1, epoch_samples)) *
                       static_cast<double>(std::max(1, size()));
  rate_history.push_back(static_cast<double>(total) / denom);
  epoch_samples = 0;
  ++epochs_elapsed;
}

double SparsityState::dead_fraction() const {
  if (dead.empty()) return 0.0;
  return static_cast<double>(std::count(dead.begin(), dead.end(), true)) /
         static_cast<double>(dead.size());
}

Tensor update_bias_boost(const SparsityState& state, int t, double b_base, BoostCountMode mode,
                         std::int64_t samples_per_epoch) {
  if (t < 1) throw ContractError("update_bias_boost: t must be >= 1 (got " + std::to_string(t) + ")");
  const double per_epoch =
      mode == BoostCountMode::Rate ? static_cast<double>(std::max<std::int64_t>(1, samples_per_epoch)) : 1.0;
  Tensor boost(1, state.size());
  for (int i = 0; i < state.size(); ++i) {
    const double c = static_cast<double>(state.cumulative_counts[static_cast<std::size_t>(i)]) / per_epoch;
    boost(0, i) = b_base * std::exp(-0.01 * c / t);
  }
  return boost;
}

int revive_dead_neurons(SparsityState& state, const SaeParams& sae, ParamStore& params, Rng& rng,
                        const RevivalConfig& config) {
  state.last_warning.clear();
  if (!(state.dead_fraction() > config.dead_rate_gate)) return 0;

  std::vector<int> active;
  std::vector<int> stale;
  for (int i = 0; i < state.size(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (!state.dead[u]) {
      active.push_back(i);
    } else if (state.epochs_inactive[u] > config.inactive_epochs) {
      stale.push_back(i);
    }
  }
  if (stale.empty()) return 0;
  if (active.empty()) {
    state.last_warning = sae.prefix + ": revival skipped, no active neurons";
    return 0;
  }

  Parameter& dict = params.at(sae.dict());
  Parameter& bias = params.at(sae.encoder_bias());
  Parameter* enc = sae.tied ? nullptr : &params.at(sae.encoder_weight());

  // Std over every entry of the active atoms.
  double sum = 0.0;
  double sq = 0.0;
  for (const int j : active) {
    sum += dict.value.col(j).sum();
    sq += dict.value.col(j).squaredNorm();
  }
  const double n = static_cast<double>(active.size()) * static_cast<double>(dict.value.rows());
  const double mean = sum / n;
  const double std_dev = std::sqrt(std::max(0.0, sq / n - mean * mean));
  const double noise = config.noise_scale * std_dev;

  for (const int i : stale) {
    const int donor = active[static_cast<std::size_t>(rng.uniform_int(active.size()))];
    auto col = dict.value.col(i);
    col = dict.value.col(donor);
    for (Eigen::Index r = 0; r < col.size(); ++r) col(r) += noise * rng.normal();
    const double norm = col.norm();
    if (norm > 0.0) col /= norm;
    dict.m.col(i).setZero();
    dict.v.col(i).setZero();
    if (enc != nullptr) {
      enc->value.row(i) = col.transpose();
      enc->m.row(i).setZero();
      enc->v.row(i).setZero();
    }
    bias.value(0, i) = 0.0;
    bias.m(0, i) = 0.0;
    bias.v(0, i) = 0.0;
    state.epochs_inactive[static_cast<std::size_t>(i)] = 0;
  }
  return static_cast<int>(stale.size());
}

}  // namespace sparsecollapse
