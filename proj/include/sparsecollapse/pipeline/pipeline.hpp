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
#include "sparsecollapse/metrics/evaluate.hpp"
#include "sparsecollapse/model/hybrid_model.hpp"
#include "sparsecollapse/pipeline/experiment_config.hpp"
#include "sparsecollapse/sparsity/sparsity_control.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsecollapse {

/// Non-finite loss or gradient during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kStage1 = "stage1";
inline constexpr const char* kStage2 = "stage2";
inline constexpr const char* kStage3 = "stage3";
inline constexpr const char* kExtended = "extended";

/// One row of the per-epoch trajectory.
struct EpochRecord {
  std::string stage;
  /// Index within the stage.
  int stage_epoch = 0;
  MetricReport metrics;
  std::optional<int> k;
  std::optional<double> lambda;
  std::optional<double> beta;
  std::optional<int> revived;
  std::optional<double> boost_mean;
  double latent_dead_rate = 0.0;
  int latent_specialized = 0;
  int latent_revived = 0;
  double max_normalized_mi = 0.0;
  /// Batch means of the training objective and its parts.
  double train_loss = 0.0;
  double train_recon_mse = 0.0;
  double train_kl = 0.0;
  double train_sae_recon = 0.0;
};

/// Dead-rate and specialisation change over extended training.
struct ExtendedSummary {
  double init_dead_rate = 0.0;
  double final_dead_rate = 0.0;
  int init_specialized = 0;
  int final_specialized = 0;
  int initially_dead = 0;
  /// Per extended epoch: fraction of the initially dead neurons still dead
  /// (0 when none were dead at the start).
  std::vector<double> survival;

  [[nodiscard]] double recovery() const { return final_dead_rate - init_dead_rate; }
  /// Relative change of the specialised count in percent (0 when both are 0).
  [[nodiscard]] double specialized_change_pct() const;
};

struct StageBoundary {
  std::string stage;
  int first_epoch = 0;
  int epochs = 0;
};

struct RunRecord {
  std::string run_id;
  std::uint64_t config_hash = 0;
  int seed = 0;
  Preset preset = Preset::MiniGray;
  SparsityMethod method = SparsityMethod::TopK;
  std::vector<EpochRecord> epochs;
  std::vector<StageBoundary> stages;
  std::string checkpoint_path;
  std::map<std::string, double> wall_clock_seconds;
  std::optional<ExtendedSummary> extended;
  bool failed = false;
  std::string error;

  /// Last record of the given stage, if any.
  [[nodiscard]] const EpochRecord* last_of(const std::string& stage) const;
  [[nodiscard]] const EpochRecord* first_of(const std::string& stage) const;
};

std::string make_run_id(Preset preset, SparsityMethod method, int seed);

/// One training run: owns the model, its sparsity bookkeeping and the
/// per-purpose random streams. Stages must be called in order.
class ExperimentRun {
 public:
  ExperimentRun(const ExperimentConfig& config, int seed, Preset preset, SparsityMethod method);
  /// Reuses an existing dataset (must match preset and seed).
  ExperimentRun(const ExperimentConfig& config, int seed, Preset preset, SparsityMethod method,
                FactorDataset dataset);

  std::vector<EpochRecord> run_stage1();
  std::vector<EpochRecord> run_stage2();
  std::vector<EpochRecord> run_stage3();
  /// Continues at the final sparsity (k_min or lambda_end) for `epochs`.
  std::vector<EpochRecord> run_extended(int epochs);

  /// Writes the checkpoint (docs/file-formats.md, "Checkpoint").
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores a run. Throws ConfigError when the checkpoint was trained
  /// under a different configuration, listing every differing key.
  static ExperimentRun load_checkpoint(const std::filesystem::path& path,
                                       const ExperimentConfig& config);

  [[nodiscard]] const ExperimentConfig& config() const { return config_; }
  [[nodiscard]] const FactorDataset& dataset() const { return dataset_; }
  HybridModel& model() { return model_; }
  [[nodiscard]] const HybridModel& model() const { return model_; }
  SparsityState& feature_state() { return feature_state_; }
  SparsityState& latent_state() { return latent_state_; }
  [[nodiscard]] const RunRecord& record() const { return record_; }
  RunRecord& record() { return record_; }
  [[nodiscard]] int epochs_completed() const { return epochs_completed_; }
  [[nodiscard]] const std::vector<int>& eval_sample() const { return eval_sample_; }

  /// Evaluation under the given sparsity budget without recording it.
  [[nodiscard]] Evaluation evaluate_now(const SparsityMode& feature_mode) const;
  /// Sparsity mode the latest stage trained with.
  [[nodiscard]] SparsityMode current_mode() const;

 private:
  struct EpochTotals;

  Rng stream(const std::string& label) const;
  SparsityMode latent_mode(const SparsityMode& feature_mode) const;
  EvalSettings eval_settings(const SparsityMode& feature_mode) const;
  EpochRecord finish_epoch(const std::string& stage, int stage_epoch, const SparsityMode& mode,
                           const EpochTotals& totals, bool control);
  /// `after_epoch` sees each finished record before it is returned.
  std::vector<EpochRecord> joint_epochs(const std::string& stage, int epochs, bool extended,
                                        const std::function<void(EpochRecord&)>& after_epoch = {});
  void begin_stage(const std::string& stage, int epochs);

  ExperimentConfig config_;
  int seed_;
  Rng root_;
  FactorDataset dataset_;
  HybridModel model_;
  SparsityState feature_state_;
  SparsityState latent_state_;
  std::vector<int> eval_sample_;
  RunRecord record_;
  int epochs_completed_ = 0;
  int stage3_epochs_done_ = 0;
  int extended_epochs_done_ = 0;
  SparsityMode mode_;
};

/// Runs stages 1-3 (and extended training when requested), writing
/// checkpoints and the per-epoch CSV under out_dir/run_id when out_dir is
/// non-empty.
RunRecord run_pipeline(const ExperimentConfig& config, int seed, Preset preset,
                       SparsityMethod method, const std::filesystem::path& out_dir,
                       bool with_extended = false);

/// Every seed x method x preset; failures are recorded, not thrown.
std::vector<RunRecord> run_suite(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Keys whose values differ between two configurations.
std::vector<std::string> config_diff(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace sparsecollapse
