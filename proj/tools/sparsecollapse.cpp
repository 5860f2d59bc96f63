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

#include "sparsecollapse/io/binary_io.hpp"
#include "sparsecollapse/metrics/information.hpp"
#include "sparsecollapse/pipeline/pipeline.hpp"
#include "sparsecollapse/report/config_io.hpp"
#include "sparsecollapse/report/csv.hpp"
#include "sparsecollapse/report/plot.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sparsecollapse;

namespace {

constexpr int kExitRunFailure = 1;
constexpr int kExitConfigError = 2;

struct CommonOptions {
  std::string config_path;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out, "Output directory (default: $SPARSECOLLAPSE_OUT or ./runs)");
  cmd->add_option("--set", opts.overrides, "Override a config value: dotted.key=value (repeatable)");
}

fs::path output_dir(const CommonOptions& opts) {
  if (!opts.out.empty()) return opts.out;
  if (const char* env = std::getenv("SPARSECOLLAPSE_OUT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

ExperimentConfig load_config(const CommonOptions& opts) {
  std::optional<fs::path> path;
  if (!opts.config_path.empty()) path = opts.config_path;
  return parse_config(path, opts.overrides);
}

std::string extended_csv(const RunRecord& r) {
  std::string text =
      "run_id,init_dead_rate,final_dead_rate,recovery,init_specialized,final_specialized,"
      "specialized_change_pct,initially_dead,final_survival\n";
  if (!r.extended) return text;
  const ExtendedSummary& e = *r.extended;
  text += r.run_id + "," + format_real(e.init_dead_rate) + "," + format_real(e.final_dead_rate) + "," +
          format_real(e.recovery()) + "," + std::to_string(e.init_specialized) + "," +
          std::to_string(e.final_specialized) + "," + format_real(e.specialized_change_pct()) + "," +
          std::to_string(e.initially_dead) + "," + (e.survival.empty() ? "" : format_real(e.survival.back())) +
          "\n";
  return text;
}

int cmd_run(const CommonOptions& opts, std::optional<int> seed, bool extended) {
  const ExperimentConfig cfg = load_config(opts);
  const int s = seed.value_or(cfg.seeds.front());
  const fs::path out = output_dir(opts);
  std::cerr << "run " << make_run_id(cfg.preset, cfg.method, s) << " config " << hash_hex(config_hash(cfg))
            << " -> " << out.string() << "\n";
  const RunRecord r = run_pipeline(cfg, s, cfg.preset, cfg.method, out, extended);
  if (r.failed) {
    std::cerr << "run failed: " << r.error << "\n";
    return kExitRunFailure;
  }
  const EpochRecord* last = r.last_of(kStage3);
  if (last != nullptr) {
    std::cout << r.run_id << ": mig=" << format_real(last->metrics.mig)
              << " specialized=" << last->metrics.specialized_count
              << " dead_rate=" << format_real(last->metrics.dead_rate) << " mse=" << format_real(last->metrics.mse)
              << "\n";
  }
  return 0;
}

int cmd_suite(const CommonOptions& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const fs::path out = output_dir(opts);
  fs::create_directories(out);
  const auto records = run_suite(cfg, out);
  int failed = 0;
  for (const auto& r : records) {
    if (r.failed) {
      ++failed;
      std::cerr << r.run_id << " failed: " << r.error << "\n";
    }
  }
  std::cout << summary_csv(records);
  return failed > 0 ? kExitRunFailure : 0;
}

int cmd_extend(const CommonOptions& opts, const std::string& from, std::optional<int> epochs) {
  const ExperimentConfig cfg = load_config(opts);
  ExperimentRun run = ExperimentRun::load_checkpoint(from, cfg);
  const fs::path dir = output_dir(opts) / (run.record().run_id + "_extended");
  fs::create_directories(dir);
  try {
    run.run_extended(epochs.value_or(cfg.stages.extended));
  } catch (const TrainingError& e) {
    run.record().failed = true;
    run.record().error = e.what();
  }
  RunRecord& r = run.record();
  if (!r.failed) {
    run.save_checkpoint(dir / "extended.ckpt");
    r.checkpoint_path = (dir / "extended.ckpt").string();
  }
  emit_epoch_csv(r, dir / "epochs.csv");
  emit_diagnostics_csv(r, dir / "diagnostics.csv");
  emit_survival_csv(r, dir / "survival.csv");
  write_text_file(dir / "extended.csv", extended_csv(r));
  if (r.failed) {
    std::cerr << "extension failed: " << r.error << "\n";
    return kExitRunFailure;
  }
  std::cout << extended_csv(r);
  return 0;
}

int cmd_sweep(const CommonOptions& opts, const std::vector<std::string>& checkpoints,
              const std::vector<std::string>& dumps, bool write_dumps) {
  const ExperimentConfig cfg = load_config(opts);
  if (checkpoints.empty() && dumps.empty()) throw CLI::ValidationError("sweep", "give --from or --dump");
  const fs::path out = output_dir(opts);
  fs::create_directories(out);

  std::vector<std::pair<std::string, ActivationDump>> inputs;
  std::vector<std::string> presets;
  for (const auto& ck : checkpoints) {
    const ExperimentRun run = ExperimentRun::load_checkpoint(ck, cfg);
    Evaluation ev = run.evaluate_now(run.current_mode());
    if (write_dumps) write_activation_dump(ev.dump, out / (run.record().run_id + ".acts"));
    inputs.emplace_back(run.record().run_id, std::move(ev.dump));
    presets.emplace_back(preset_name(run.record().preset));
  }
  for (const auto& d : dumps) {
    inputs.emplace_back(fs::path(d).stem().string(), read_activation_dump(d));
    presets.emplace_back(fs::path(d).stem().string());
  }
  std::map<std::string, int> uses;
  for (const auto& p : presets) ++uses[p];

  SweepOutput sweep;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& dump = inputs[i].second;
    const std::string label = uses[presets[i]] == 1 ? presets[i] : inputs[i].first;
    sweep.columns.emplace_back(label, threshold_sweep(dump.codes, dump.labels, cfg.metrics.spec_sweep,
                                                      cfg.metrics.dead_sweep, cfg.metrics.bins));
  }
  emit_sweep_table(sweep, out / "sweep_specialization.csv", out / "sweep_dead.csv");
  const auto [spec, dead] = sweep_csvs(sweep);
  std::cout << spec << "\n" << dead;
  return 0;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& metric, std::string out) {
  if (out.empty()) out = metric + ".svg";
  std::vector<fs::path> paths(inputs.begin(), inputs.end());
  emit_plot(paths, metric, out);
  std::cerr << "wrote " << out << "\n";
  return 0;
}

int cmd_gen_data(const CommonOptions& opts, const std::string& preset_text, std::optional<int> seed) {
  const ExperimentConfig cfg = load_config(opts);
  Preset preset = cfg.preset;
  if (!preset_text.empty()) {
    try {
      preset = parse_preset(preset_text);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  const int s = seed.value_or(cfg.seeds.front());
  const FactorDataset data =
      build_dataset(preset, Rng(static_cast<std::uint64_t>(s), "sparsecollapse").stream("data"));
  const fs::path out = output_dir(opts);
  fs::create_directories(out);
  const fs::path file = out / (std::string(preset_name(preset)) + "_s" + std::to_string(s) + ".scdata");
  write_dataset_dump(data, file);
  std::cout << file.string() << ": " << data.size() << " images (" << data.train.size() << " train, "
            << data.validation.size() << " validation)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-autoencoder specialisation collapse experiments"};
  app.require_subcommand(1);

  CommonOptions run_opts, suite_opts, extend_opts, sweep_opts, gen_opts;
  std::optional<int> run_seed, gen_seed, extend_epochs;
  bool run_extended = false;
  std::string extend_from, plot_metric, plot_out, gen_preset;
  std::vector<std::string> sweep_from, sweep_dumps, plot_inputs;
  bool sweep_write_dumps = false;

  auto* run = app.add_subcommand("run", "Train one seed through stages 1-3");
  add_common(run, run_opts);
  run->add_option("--seed", run_seed, "Seed (default: first entry of seeds)");
  run->add_flag("--extended", run_extended, "Continue with extended training after stage 3");

  auto* suite = app.add_subcommand("suite", "Every seed x method x preset, with summary CSVs");
  add_common(suite, suite_opts);

  auto* extend = app.add_subcommand("extend", "Extended training from a stage-3 checkpoint");
  add_common(extend, extend_opts);
  extend->add_option("--from", extend_from, "Checkpoint file")->required()->check(CLI::ExistingFile);
  extend->add_option("--epochs", extend_epochs, "Epochs (default: stages.extended)");

  auto* sweep = app.add_subcommand("sweep", "Threshold sensitivity tables");
  add_common(sweep, sweep_opts);
  sweep->add_option("--from", sweep_from, "Checkpoint file (repeatable)")->check(CLI::ExistingFile);
  sweep->add_option("--dump", sweep_dumps, "Activation dump file (repeatable)")->check(CLI::ExistingFile);
  sweep->add_flag("--write-dumps", sweep_write_dumps, "Save the activation dump of every checkpoint");

  auto* plot = app.add_subcommand("plot", "SVG line plot of an epoch CSV column");
  plot->add_option("inputs", plot_inputs, "Epoch CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("--metric", plot_metric, "Column to plot")->required();
  plot->add_option("--out", plot_out, "Output SVG file (default: <metric>.svg)");

  auto* gen = app.add_subcommand("gen-data", "Write a dataset dump");
  add_common(gen, gen_opts);
  gen->add_option("--preset", gen_preset, "mini-gray or mini-rgb (default: config preset)");
  gen->add_option("--seed", gen_seed, "Split seed (default: first entry of seeds)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (*run) return cmd_run(run_opts, run_seed, run_extended);
    if (*suite) return cmd_suite(suite_opts);
    if (*extend) return cmd_extend(extend_opts, extend_from, extend_epochs);
    if (*sweep) return cmd_sweep(sweep_opts, sweep_from, sweep_dumps, sweep_write_dumps);
    if (*plot) return cmd_plot(plot_inputs, plot_metric, plot_out);
    if (*gen) return cmd_gen_data(gen_opts, gen_preset, gen_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  }
  return kExitRunFailure;
}
