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

#include "sparsecollapse/metrics/information.hpp"
#include "sparsecollapse/pipeline/pipeline.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sparsecollapse {

/// Column order of the per-epoch CSV.
inline const std::vector<std::string> kEpochCsvColumns = {
    "run_id", "seed", "preset", "method", "stage", "epoch", "k", "lambda",
    "beta", "mig", "specialized", "dead_rate", "mse", "effective_sparsity", "revived", "boost_mean"};

/// Six significant digits, shortest of %g.
std::string format_real(double value);

std::string epoch_csv(const RunRecord& record);
void emit_epoch_csv(const RunRecord& record, const std::filesystem::path& path);

/// Latent-SAE statistics and training-loss averages per epoch.
std::string diagnostics_csv(const RunRecord& record);
void emit_diagnostics_csv(const RunRecord& record, const std::filesystem::path& path);

/// Per extended epoch: survival fraction of the initially dead set.
std::string survival_csv(const RunRecord& record);
void emit_survival_csv(const RunRecord& record, const std::filesystem::path& path);

/// Header plus string cells; values never contain commas or quotes.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header or -1.
  [[nodiscard]] int column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

struct MeanStd {
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 when n < 2.
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& values);

/// Final stage-3 metrics of one (preset, method) group across seeds.
struct SummaryGroup {
  std::string preset;
  std::string method;
  int n = 0;
  int failed = 0;
  MeanStd mig;
  MeanStd specialized;
  MeanStd dead_rate;
  MeanStd mse;
  MeanStd effective_sparsity;
  int n_extended = 0;
  MeanStd init_dead_rate;
  MeanStd final_dead_rate;
  MeanStd recovery;
  MeanStd specialized_change_pct;
  MeanStd final_survival;
};

/// Groups in order of first appearance; failed runs count in `failed`, not `n`.
std::vector<SummaryGroup> summarize(const std::vector<RunRecord>& records);

std::string summary_csv(const std::vector<RunRecord>& records);
void emit_summary(const std::vector<RunRecord>& records, const std::filesystem::path& path);

/// One row per run with the same metrics as the summary.
std::string seed_summary_csv(const std::vector<RunRecord>& records);
void emit_seed_summary(const std::vector<RunRecord>& records, const std::filesystem::path& path);

/// Threshold sweeps of several activation dumps, one column each.
struct SweepOutput {
  std::vector<std::pair<std::string, SweepTable>> columns;
};

/// Returns (specialisation CSV, dead-rate CSV). Every column must share the
/// same thresholds.
std::pair<std::string, std::string> sweep_csvs(const SweepOutput& sweep);
void emit_sweep_table(const SweepOutput& sweep, const std::filesystem::path& spec_path,
                      const std::filesystem::path& dead_path);

/// Writes `text` to `path`, throwing std::runtime_error on I/O failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace sparsecollapse
