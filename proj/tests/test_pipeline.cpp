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

#include "sparsecollapse/pipeline/pipeline.hpp"
#include "sparsecollapse/report/csv.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace sparsecollapse;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.seeds = {7};
  c.stages = {2, 2, 3, 2};
  c.schedule.k_max = 16;
  c.schedule.k_min = 4;
  c.schedule.warmup_epochs = 1;
  c.schedule.anneal_end_epoch = 2;
  c.schedule.total_epochs = 3;
  c.hidden_dim = 32;
  c.feature_dim = 16;
  c.training.batch_size = 128;
  c.optimizer.lr = 1e-3;
  c.metrics.eval_samples = 300;
  c.validate();
  return c;
}

// The dataset is the expensive part of construction; share one build.
const FactorDataset& shared_dataset() {
  static const FactorDataset data = build_dataset(Preset::MiniGray, Rng(7, "sparsecollapse").stream("data"));
  return data;
}

ExperimentRun make_run(const ExperimentConfig& c, SparsityMethod method = SparsityMethod::TopK) {
  return ExperimentRun(c, 7, Preset::MiniGray, method, shared_dataset());
}

std::map<std::string, Tensor> snapshot(const ParamStore& store, const std::string& prefix) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : store.entries()) {
    if (name.starts_with(prefix)) out.emplace(name, p.value);
  }
  return out;
}

bool same_metrics(const EpochRecord& a, const EpochRecord& b) {
  return a.stage == b.stage && a.stage_epoch == b.stage_epoch && a.metrics.mig == b.metrics.mig &&
         a.metrics.dead_rate == b.metrics.dead_rate && a.metrics.mse == b.metrics.mse &&
         a.metrics.specialized_count == b.metrics.specialized_count && a.train_loss == b.train_loss;
}

}  // namespace

TEST_CASE("stage isolation") {
  const ExperimentConfig c = small_config();
  ExperimentRun run = make_run(c);
  const auto sae_before = snapshot(run.model().params(), "sae_");
  const auto vae_init = snapshot(run.model().params(), "vae.");
  run.run_stage1();
  CHECK(snapshot(run.model().params(), "sae_") == sae_before);
  CHECK(snapshot(run.model().params(), "vae.") != vae_init);

  const auto vae_after1 = snapshot(run.model().params(), "vae.");
  run.run_stage2();
  CHECK(snapshot(run.model().params(), "vae.") == vae_after1);
  CHECK(snapshot(run.model().params(), "sae_") != sae_before);
  for (const char* dict : {"sae_feat.dict", "sae_latent.dict"}) {
    const Tensor& d = run.model().params().at(dict).value;
    for (Eigen::Index j = 0; j < d.cols(); ++j) CHECK(std::abs(d.col(j).norm() - 1.0) < 1e-9);
  }

  run.run_stage3();
  CHECK(snapshot(run.model().params(), "vae.") != vae_after1);
  CHECK(run.feature_state().epochs_elapsed == 3);
}

TEST_CASE("epoch accounting and schedule columns") {
  const ExperimentConfig c = small_config();
  ExperimentRun run = make_run(c);
  const auto s1 = run.run_stage1();
  const auto s2 = run.run_stage2();
  const auto s3 = run.run_stage3();
  REQUIRE(s1.size() == 2);
  REQUIRE(s2.size() == 2);
  REQUIRE(s3.size() == 3);
  const RunRecord& r = run.record();
  CHECK(r.epochs.size() == 7);
  CHECK(run.epochs_completed() == 7);
  for (std::size_t i = 0; i < r.epochs.size(); ++i) CHECK(r.epochs[i].metrics.epoch == static_cast<int>(i));
  REQUIRE(r.stages.size() == 3);
  CHECK(r.stages[2].stage == kStage3);
  CHECK(r.stages[2].first_epoch == 4);
  CHECK(r.stages[2].epochs == 3);

  // Beta warms up across stage 1, with its last epoch at beta_end.
  CHECK(*s1[0].beta == doctest::Approx(c.schedule.beta_start));
  CHECK(*s1[1].beta == doctest::Approx(c.schedule.beta_end));
  CHECK_FALSE(s2[0].beta.has_value());
  for (const auto& e : s3) CHECK(*e.beta == c.schedule.beta_end);

  for (const auto& e : s2) CHECK(*e.k == c.schedule.k_max);
  for (const auto& e : s3) {
    CHECK(*e.k == schedule_k(e.stage_epoch, c.schedule));
    CHECK(e.metrics.k_or_lambda == *e.k);
    CHECK_FALSE(e.lambda.has_value());
    CHECK(e.revived.has_value());
    CHECK(e.boost_mean.has_value());
    CHECK(e.metrics.finite());
  }
  CHECK(*s3.back().k == c.schedule.k_min);
  CHECK(r.first_of(kStage3) == &r.epochs[4]);
  CHECK(r.last_of(kStage3) == &r.epochs[6]);
  CHECK(r.last_of(kExtended) == nullptr);
}

TEST_CASE("l1 runs anneal lambda") {
  const ExperimentConfig c = small_config();
  ExperimentRun run = make_run(c, SparsityMethod::L1);
  run.run_stage1();
  run.run_stage2();
  for (const auto& e : run.run_stage3()) {
    CHECK_FALSE(e.k.has_value());
    CHECK(*e.lambda == doctest::Approx(schedule_lambda(e.stage_epoch, c.schedule)));
  }
  CHECK(run.current_mode().method == SparsityMethod::L1);
}

TEST_CASE("runs are deterministic") {
  const ExperimentConfig c = small_config();
  const RunRecord a = run_pipeline(c, 7, Preset::MiniGray, SparsityMethod::TopK, {}, true);
  const RunRecord b = run_pipeline(c, 7, Preset::MiniGray, SparsityMethod::TopK, {}, true);
  REQUIRE_FALSE(a.failed);
  REQUIRE(a.epochs.size() == 9);
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) CHECK(same_metrics(a.epochs[i], b.epochs[i]));
  REQUIRE(a.extended.has_value());
  CHECK(a.extended->survival == b.extended->survival);
  CHECK(a.extended->survival.size() == 2);
  CHECK(a.run_id == "mini-gray_topk_s7");

  const RunRecord other = run_pipeline(c, 8, Preset::MiniGray, SparsityMethod::TopK, {}, false);
  CHECK(other.epochs.back().train_loss != a.epochs[6].train_loss);
}

TEST_CASE("zero-epoch stages") {
  ExperimentConfig c = small_config();
  c.stages.stage1 = 0;
  ExperimentRun run = make_run(c);
  const auto before = snapshot(run.model().params(), "");
  CHECK(run.run_stage1().empty());
  CHECK(snapshot(run.model().params(), "") == before);
  CHECK(run.epochs_completed() == 0);

  const ExperimentConfig full = small_config();
  ExperimentRun ext = make_run(full);
  ext.run_stage1();
  ext.run_stage2();
  ext.run_stage3();
  CHECK(ext.run_extended(0).empty());
  REQUIRE(ext.record().extended.has_value());
  const ExtendedSummary& s = *ext.record().extended;
  CHECK(s.recovery() == 0.0);
  CHECK(s.specialized_change_pct() == 0.0);
  CHECK(s.survival.empty());
}

TEST_CASE("extended summary arithmetic") {
  ExtendedSummary s;
  s.init_dead_rate = 0.6;
  s.final_dead_rate = 0.45;
  s.init_specialized = 4;
  s.final_specialized = 5;
  CHECK(s.recovery() == doctest::Approx(-0.15));
  CHECK(s.specialized_change_pct() == doctest::Approx(25.0));
  s.init_specialized = 0;
  s.final_specialized = 2;
  CHECK(s.specialized_change_pct() == doctest::Approx(200.0));
}

TEST_CASE("checkpoint round trip resumes identically") {
  const ExperimentConfig c = small_config();
  ExperimentRun run = make_run(c);
  run.run_stage1();
  run.run_stage2();
  run.run_stage3();
  const auto path = testing::temp_dir("ckpt") / "stage3.ckpt";
  run.save_checkpoint(path);

  ExperimentRun loaded = ExperimentRun::load_checkpoint(path, c);
  CHECK(loaded.epochs_completed() == run.epochs_completed());
  for (const auto& [name, p] : run.model().params().entries()) {
    const Parameter& q = loaded.model().params().at(name);
    CHECK(q.value == p.value);
    CHECK(q.m == p.m);
    CHECK(q.v == p.v);
    CHECK(q.trainable == p.trainable);
  }
  CHECK(loaded.feature_state().cumulative_counts == run.feature_state().cumulative_counts);
  CHECK(loaded.feature_state().boost == run.feature_state().boost);

  const auto a = run.run_extended(2);
  const auto b = loaded.run_extended(2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_metrics(a[i], b[i]));
  CHECK(a.back().metrics.epoch == 8);

  ExperimentConfig more = c;
  more.stages.extended = 50;
  more.metrics.eval_samples = 100;
  CHECK_NOTHROW(ExperimentRun::load_checkpoint(path, more));

  ExperimentConfig changed = c;
  changed.optimizer.lr = 5e-4;
  changed.schedule.k_min = 2;
  try {
    (void)ExperimentRun::load_checkpoint(path, changed);
    FAIL("mismatched configuration was accepted");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("optimizer.lr") != std::string::npos);
    CHECK(msg.find("schedule.k_min") != std::string::npos);
  }
  CHECK(config_diff(c, changed) == std::vector<std::string>{"optimizer.lr", "schedule.k_min"});

  testing::write_bytes(path, "not a checkpoint");
  CHECK_THROWS(ExperimentRun::load_checkpoint(path, c));
}

TEST_CASE("divergence aborts with a diagnostic") {
  ExperimentConfig c = small_config();
  c.optimizer.lr = 1e200;
  c.training.clip_norm = 1e300;
  const RunRecord r = run_pipeline(c, 7, Preset::MiniGray, SparsityMethod::TopK, {}, false);
  CHECK(r.failed);
  CHECK(r.error.find("epoch") != std::string::npos);
  CHECK(r.error.find("batch") != std::string::npos);
}

TEST_CASE("suite writes per-run outputs and a summary") {
  ExperimentConfig c = small_config();
  c.suite.methods = {SparsityMethod::TopK, SparsityMethod::L1};
  c.suite.include_extended = true;
  c.suite.jobs = 2;
  const auto out = testing::temp_dir("suite");
  const auto records = run_suite(c, out);
  REQUIRE(records.size() == 2);
  for (const auto& r : records) {
    CHECK_FALSE(r.failed);
    CHECK(std::filesystem::exists(out / r.run_id / "stage3.ckpt"));
    CHECK(std::filesystem::exists(out / r.run_id / "extended.ckpt"));
    CHECK(std::filesystem::exists(out / r.run_id / "meta.json"));
    const CsvTable epochs = read_csv(out / r.run_id / "epochs.csv");
    CHECK(epochs.rows.size() == 9);
  }
  const CsvTable summary = read_csv(out / "summary.csv");
  CHECK(summary.rows.size() == 2);
  const CsvTable seeds = read_csv(out / "summary_seeds.csv");
  CHECK(seeds.rows.size() == 2);
}
