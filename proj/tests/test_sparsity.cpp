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

#include "sparsecollapse/model/hybrid_model.hpp"
#include "sparsecollapse/sparsity/sparsity_control.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

using namespace sparsecollapse;

namespace {

// Straight-line reading of the half-cosine anneal, kept separate from the
// library so that the two can disagree.
double cosine_oracle(double t, double warmup, double end, double hi, double lo) {
  const double tau = (t - warmup) / (end - warmup);
  return lo + (hi - lo) * 0.5 * (1.0 + std::cos(std::numbers::pi * tau));
}

SparsityState state_with_dead(int size, int dead, int inactive_epochs) {
  SparsityState s(size);
  for (int i = 0; i < dead; ++i) {
    s.dead[static_cast<std::size_t>(i)] = true;
    s.epochs_inactive[static_cast<std::size_t>(i)] = inactive_epochs;
  }
  return s;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_dim = 6;
  c.hidden_dim = 6;
  c.feature_dim = 4;
  return c;
}

}  // namespace

TEST_CASE("k schedule at large scale") {
  const ScheduleConfig cfg = ScheduleConfig::paper_scale();
  CHECK(schedule_k(0, cfg) == 500);
  CHECK(schedule_k(4, cfg) == 500);
  CHECK(schedule_k(5, cfg) == 500);
  CHECK(schedule_k(25, cfg) == 275);
  CHECK(schedule_k(45, cfg) == 50);
  CHECK(schedule_k(49, cfg) == 50);
  CHECK(schedule_k(500, cfg) == 50);
  int prev = schedule_k(0, cfg);
  for (int t = 0; t <= 60; ++t) {
    const int k = schedule_k(t, cfg);
    CHECK(k <= prev);
    if (t > 5 && t < 45) {
      CHECK(k == static_cast<int>(std::lround(cosine_oracle(t, 5, 45, 500, 50))));
    }
    prev = k;
  }
}

TEST_CASE("k schedule at desk scale") {
  const ScheduleConfig cfg;
  CHECK(schedule_k(0, cfg) == 64);
  CHECK(schedule_k(25, cfg) == 36);
  CHECK(schedule_k(45, cfg) == 8);
  for (int t = 6; t < 45; ++t) {
    CHECK(schedule_k(t, cfg) == static_cast<int>(std::lround(cosine_oracle(t, 5, 45, 64, 8))));
  }
}

TEST_CASE("lambda schedule is linear") {
  const ScheduleConfig cfg;
  CHECK(schedule_lambda(0, cfg) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(schedule_lambda(50, cfg) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(schedule_lambda(25, cfg) == doctest::Approx(0.0505).epsilon(1e-12));
  for (int t = 1; t <= 50; ++t) {
    CHECK(schedule_lambda(t, cfg) - schedule_lambda(t - 1, cfg) ==
          doctest::Approx((0.1 - 0.001) / 50.0).epsilon(1e-9));
  }
  CHECK(schedule_lambda(80, cfg) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("beta schedule") {
  const ScheduleConfig cfg;
  CHECK(schedule_beta(0, 30, cfg) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(schedule_beta(30, 30, cfg) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(schedule_beta(15, 30, cfg) == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(schedule_beta(40, 30, cfg) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(schedule_beta(3, 0, cfg) == 0.1);
  for (int t = 1; t <= 30; ++t) CHECK(schedule_beta(t, 30, cfg) >= schedule_beta(t - 1, 30, cfg));
}

TEST_CASE("latent budget scales with dictionary size") {
  CHECK(latent_k(64, 20, 256) == 5);
  CHECK(latent_k(8, 20, 256) == 1);
  CHECK(latent_k(1, 20, 256) == 1);
  CHECK(latent_k(256, 20, 256) == 20);
}

TEST_CASE("schedule validation") {
  ScheduleConfig cfg;
  cfg.k_min = 100;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = ScheduleConfig{};
  cfg.warmup_epochs = 45;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = ScheduleConfig{};
  cfg.anneal_end_epoch = 51;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  CHECK_NOTHROW(ScheduleConfig{}.validate());
  CHECK_NOTHROW(ScheduleConfig::paper_scale().validate());
}

TEST_CASE("bias boost closed forms") {
  SparsityState s(3);
  s.cumulative_counts = {0, 200, 100};
  const Tensor raw = update_bias_boost(s, 2, 0.5, BoostCountMode::Raw, 1);
  CHECK(raw(0, 0) == 0.5);
  CHECK(raw(0, 1) == doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(raw(0, 2) == doctest::Approx(0.5 * std::exp(-0.5)).epsilon(1e-14));
  CHECK(raw(0, 1) / 0.5 == doctest::Approx(0.3679).epsilon(1e-4));

  // Rate mode divides counts by samples per epoch.
  s.cumulative_counts = {0, 1000, 500};
  const Tensor rate = update_bias_boost(s, 1, 1.0, BoostCountMode::Rate, 1000);
  CHECK(rate(0, 1) == doctest::Approx(std::exp(-0.01)).epsilon(1e-14));
  CHECK(rate(0, 2) == doctest::Approx(std::exp(-0.005)).epsilon(1e-14));
  CHECK((rate.array() <= 1.0).all());

  CHECK_THROWS_AS(update_bias_boost(s, 0, 1.0, BoostCountMode::Raw, 1), ContractError);
  CHECK(parse_boost_mode("raw") == BoostCountMode::Raw);
  CHECK(boost_mode_name(BoostCountMode::Rate) == "rate");
}

TEST_CASE("firing bookkeeping is conserved") {
  SparsityState s(4);
  Rng rng(1, "codes");
  std::int64_t expected_total = 0;
  std::vector<std::int64_t> per_neuron(4, 0);
  for (int epoch = 0; epoch < 3; ++epoch) {
    for (int b = 0; b < 5; ++b) {
      Tensor codes = testing::random_tensor(7, 4, rng).cwiseMax(0.0);
      codes.col(3).setZero();
      for (Eigen::Index j = 0; j < 4; ++j) {
        const auto fired = (codes.col(j).array() > 0.0).count();
        per_neuron[static_cast<std::size_t>(j)] += fired;
        expected_total += fired;
      }
      s.record_batch(codes);
    }
    CHECK(s.epoch_samples == 35);
    s.end_epoch();
    CHECK(s.epoch_samples == 0);
  }
  CHECK(s.cumulative_counts == per_neuron);
  CHECK(std::accumulate(s.cumulative_counts.begin(), s.cumulative_counts.end(), std::int64_t{0}) ==
        expected_total);
  CHECK(s.epochs_elapsed == 3);
  CHECK(s.epochs_inactive[3] == 3);
  CHECK(s.rate_history.size() == 3);
  const double mean_rate = (s.rate_history[0] + s.rate_history[1] + s.rate_history[2]) / 3.0;
  CHECK(mean_rate == doctest::Approx(static_cast<double>(expected_total) / (3 * 35 * 4)).epsilon(1e-12));
  CHECK_THROWS_AS(s.record_batch(Tensor::Zero(2, 3)), DimensionError);
}

TEST_CASE("revival gate and staleness") {
  HybridModel m(tiny_config(), Rng(2, "init"));
  const SaeParams& sae = m.sae_latent();
  Rng rng(2, "revival");

  SparsityState low = state_with_dead(20, 8, 10);  // 0.4 dead
  CHECK(revive_dead_neurons(low, sae, m.params(), rng) == 0);

  SparsityState one = state_with_dead(20, 12, 2);  // 0.6 dead, only neuron 0 stale
  one.epochs_inactive[0] = 6;
  CHECK(revive_dead_neurons(one, sae, m.params(), rng) == 1);
  CHECK(one.epochs_inactive[0] == 0);

  SparsityState fresh = state_with_dead(20, 12, 5);
  CHECK(revive_dead_neurons(fresh, sae, m.params(), rng) == 0);

  SparsityState half = state_with_dead(20, 10, 9);  // exactly 0.5 does not exceed the gate
  CHECK(revive_dead_neurons(half, sae, m.params(), rng) == 0);

  SparsityState all = state_with_dead(20, 20, 9);
  CHECK(revive_dead_neurons(all, sae, m.params(), rng) == 0);
  CHECK(all.last_warning.find("no active neurons") != std::string::npos);
}

TEST_CASE("revived atoms copy an active donor with small noise") {
  HybridModel m(tiny_config(), Rng(3, "init"));
  const SaeParams& sae = m.sae_latent();
  Parameter& dict = m.params().at(sae.dict());
  Parameter& bias = m.params().at(sae.encoder_bias());
  bias.value.setConstant(0.3);
  dict.m.setConstant(1.0);
  dict.v.setConstant(1.0);
  const Tensor before = dict.value;

  SparsityState s = state_with_dead(20, 14, 7);
  Rng rng(3, "revival");
  CHECK(revive_dead_neurons(s, sae, m.params(), rng) == 14);
  for (int i = 0; i < 14; ++i) {
    const auto col = dict.value.col(i);
    CHECK(std::abs(col.norm() - 1.0) < 1e-12);
    double nearest = 1e9;
    for (int j = 14; j < 20; ++j) nearest = std::min(nearest, (col - before.col(j)).norm());
    CHECK(nearest < 0.1);
    CHECK(bias.value(0, i) == 0.0);
    CHECK(dict.m.col(i).isZero());
    CHECK(dict.v.col(i).isZero());
  }
  for (int j = 14; j < 20; ++j) {
    CHECK(dict.value.col(j) == before.col(j));
    CHECK(bias.value(0, j) == 0.3);
  }
}
