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

#include "sparsecollapse/report/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sparsecollapse {

namespace {

std::string opt_int(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); }
std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

std::string join(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) line += ',';
    line += cells[i];
  }
  line += '\n';
  return line;
}

std::string sanitize(std::string text) {
  for (char& c : text) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = c == ',' ? ';' : ' ';
  }
  return text;
}

/// Final stage-3 row, falling back to the last row of any stage.
const EpochRecord* final_row(const RunRecord& r) {
  if (const EpochRecord* e = r.last_of(kStage3)) return e;
  return r.epochs.empty() ? nullptr : &r.epochs.back();
}

void append_stat(std::vector<std::string>& cells, const MeanStd& s, bool present) {
  cells.push_back(present ? format_real(s.mean) : "");
  cells.push_back(present ? format_real(s.std) : "");
}

}  // namespace

std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string epoch_csv(const RunRecord& record) {
  std::string text = join(kEpochCsvColumns);
  const std::string preset(preset_name(record.preset));
  const std::string method(method_name(record.method));
  for (const auto& e : record.epochs) {
    const MetricReport& m = e.metrics;
    text += join({record.run_id, std::to_string(record.seed), preset, method, e.stage, std::to_string(m.epoch),
                  opt_int(e.k), opt_real(e.lambda), opt_real(e.beta), format_real(m.mig),
                  std::to_string(m.specialized_count), format_real(m.dead_rate), format_real(m.mse),
                  format_real(m.effective_sparsity), opt_int(e.revived), opt_real(e.boost_mean)});
  }
  return text;
}

void emit_epoch_csv(const RunRecord& record, const std::filesystem::path& path) {
  write_text_file(path, epoch_csv(record));
}

std::string diagnostics_csv(const RunRecord& record) {
  std::string text = join({"run_id", "stage", "epoch", "latent_dead_rate", "latent_specialized",
                           "latent_revived", "max_normalized_mi", "train_loss", "train_recon_mse", "train_kl", "train_sae_recon"});
  for (const auto& e : record.epochs) {
    text += join({record.run_id, e.stage, std::to_string(e.metrics.epoch), format_real(e.latent_dead_rate),
                  std::to_string(e.latent_specialized), e.revived ? std::to_string(e.latent_revived) : "", format_real(e.max_normalized_mi),
                  format_real(e.train_loss), format_real(e.train_recon_mse), format_real(e.train_kl),
                  format_real(e.train_sae_recon)});
  }
  return text;
}

void emit_diagnostics_csv(const RunRecord& record, const std::filesystem::path& path) {
  write_text_file(path, diagnostics_csv(record));
}

std::string survival_csv(const RunRecord& record) {
  std::string text = join({"run_id", "extended_epoch", "survival", "dead_rate", "specialized"});
  if (!record.extended) return text;
  std::vector<const EpochRecord*> rows;
  for (const auto& e : record.epochs) {
    if (e.stage == kExtended) rows.push_back(&e);
  }
  const auto& survival = record.extended->survival;
  for (std::size_t i = 0; i < survival.size() && i < rows.size(); ++i) {
    text += join({record.run_id, std::to_string(i), format_real(survival[i]), format_real(rows[i]->metrics.dead_rate),
                  std::to_string(rows[i]->metrics.specialized_count)});
  }
  return text;
}

void emit_survival_csv(const RunRecord& record, const std::filesystem::path& path) {
  write_text_file(path, survival_csv(record));
}

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != table.header.size()) {
        throw std::runtime_error("csv: row with " + std::to_string(cells.size()) + " cells, header has " +
                                 std::to_string(table.header.size()));
      }
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (const double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (const double v : values) sq += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::vector<SummaryGroup> summarize(const std::vector<RunRecord>& records) {
  struct Acc {
    SummaryGroup group;
    std::vector<double> mig, spec, dead, mse, eff, init_dead, final_dead, recovery, spec_change, survival;
  };
  std::vector<Acc> groups;
  for (const auto& r : records) {
    const std::string preset(preset_name(r.preset));
    const std::string method(method_name(r.method));
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Acc& a) {
      return a.group.preset == preset && a.group.method == method;
    });
    if (it == groups.end()) {
      groups.push_back({});
      it = groups.end() - 1;
      it->group.preset = preset;
      it->group.method = method;
    }
    const EpochRecord* last = final_row(r);
    if (r.failed || last == nullptr) {
      ++it->group.failed;
      continue;
    }
    ++it->group.n;
    it->mig.push_back(last->metrics.mig);
    it->spec.push_back(last->metrics.specialized_count);
    it->dead.push_back(last->metrics.dead_rate);
    it->mse.push_back(last->metrics.mse);
    it->eff.push_back(last->metrics.effective_sparsity);
    if (r.extended) {
      ++it->group.n_extended;
      it->init_dead.push_back(r.extended->init_dead_rate);
      it->final_dead.push_back(r.extended->final_dead_rate);
      it->recovery.push_back(r.extended->recovery());
      it->spec_change.push_back(r.extended->specialized_change_pct());
      it->survival.push_back(r.extended->survival.empty() ? 0.0 : r.extended->survival.back());
    }
  }
  std::vector<SummaryGroup> out;
  for (auto& a : groups) {
    SummaryGroup& g = a.group;
    g.mig = mean_std(a.mig);
    g.specialized = mean_std(a.spec);
    g.dead_rate = mean_std(a.dead);
    g.mse = mean_std(a.mse);
    g.effective_sparsity = mean_std(a.eff);
    g.init_dead_rate = mean_std(a.init_dead);
    g.final_dead_rate = mean_std(a.final_dead);
    g.recovery = mean_std(a.recovery);
    g.specialized_change_pct = mean_std(a.spec_change);
    g.final_survival = mean_std(a.survival);
    out.push_back(g);
  }
  return out;
}

std::string summary_csv(const std::vector<RunRecord>& records) {
  std::vector<std::string> header = {"preset", "method", "n", "failed"};
  for (const char* m : {"mig", "specialized", "dead_rate", "mse", "effective_sparsity"}) {
    header.push_back(std::string(m) + "_mean");
    header.push_back(std::string(m) + "_std");
  }
  header.push_back("n_extended");
  for (const char* m : {"init_dead_rate", "final_dead_rate", "recovery", "specialized_change_pct", "final_survival"}) {
    header.push_back(std::string(m) + "_mean");
    header.push_back(std::string(m) + "_std");
  }
  std::string text = join(header);
  for (const auto& g : summarize(records)) {
    std::vector<std::string> cells = {g.preset, g.method, std::to_string(g.n), std::to_string(g.failed)};
    const bool any = g.n > 0;
    for (const MeanStd* s : {&g.mig, &g.specialized, &g.dead_rate, &g.mse, &g.effective_sparsity}) {
      append_stat(cells, *s, any);
    }
    cells.push_back(std::to_string(g.n_extended));
    const bool ext = g.n_extended > 0;
    for (const MeanStd* s : {&g.init_dead_rate, &g.final_dead_rate, &g.recovery, &g.specialized_change_pct,
                             &g.final_survival}) {
      append_stat(cells, *s, ext);
    }
    text += join(cells);
  }
  return text;
}

void emit_summary(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  write_text_file(path, summary_csv(records));
}

std::string seed_summary_csv(const std::vector<RunRecord>& records) {
  std::string text = join({"run_id", "preset", "method", "seed", "failed", "mig", "specialized", "dead_rate", "mse",
                           "effective_sparsity", "stage3_first_dead_rate", "stage3_peak_specialized",
                           "init_dead_rate", "final_dead_rate", "recovery", "specialized_change_pct",
                           "final_survival", "error"});
  for (const auto& r : records) {
    std::vector<std::string> cells = {r.run_id, std::string(preset_name(r.preset)), std::string(method_name(r.method)),
                                      std::to_string(r.seed), r.failed ? "1" : "0"};
    const EpochRecord* last = r.failed ? nullptr : final_row(r);
    if (last != nullptr) {
      cells.push_back(format_real(last->metrics.mig));
      cells.push_back(std::to_string(last->metrics.specialized_count));
      cells.push_back(format_real(last->metrics.dead_rate));
      cells.push_back(format_real(last->metrics.mse));
      cells.push_back(format_real(last->metrics.effective_sparsity));
    } else {
      cells.insert(cells.end(), 5, "");
    }
    const EpochRecord* first3 = r.first_of(kStage3);
    cells.push_back(first3 != nullptr ? format_real(first3->metrics.dead_rate) : "");
    int peak = -1;
    for (const auto& e : r.epochs) {
      if (e.stage == kStage3) peak = std::max(peak, e.metrics.specialized_count);
    }
    cells.push_back(peak >= 0 ? std::to_string(peak) : "");
    if (r.extended) {
      cells.push_back(format_real(r.extended->init_dead_rate));
      cells.push_back(format_real(r.extended->final_dead_rate));
      cells.push_back(format_real(r.extended->recovery()));
      cells.push_back(format_real(r.extended->specialized_change_pct()));
      cells.push_back(r.extended->survival.empty() ? "" : format_real(r.extended->survival.back()));
    } else {
      cells.insert(cells.end(), 5, "");
    }
    cells.push_back(sanitize(r.error));
    text += join(cells);
  }
  return text;
}

void emit_seed_summary(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  write_text_file(path, seed_summary_csv(records));
}

std::pair<std::string, std::string> sweep_csvs(const SweepOutput& sweep) {
  std::vector<std::string> spec_header = {"threshold"};
  std::vector<std::string> dead_header = {"threshold"};
  for (const auto& [name, table] : sweep.columns) {
    spec_header.push_back(name);
    dead_header.push_back(name);
  }
  std::string spec = join(spec_header);
  std::string dead = join(dead_header);
  if (sweep.columns.empty()) return {spec, dead};
  const SweepTable& ref = sweep.columns.front().second;
  for (const auto& [name, table] : sweep.columns) {
    if (table.spec_thresholds != ref.spec_thresholds || table.dead_thresholds != ref.dead_thresholds) {
      throw std::invalid_argument("sweep column '" + name + "' uses different thresholds");
    }
  }
  // Thresholds are re-sorted here so the row order never depends on the caller.
  std::vector<std::size_t> spec_order(ref.spec_thresholds.size());
  std::vector<std::size_t> dead_order(ref.dead_thresholds.size());
  for (std::size_t i = 0; i < spec_order.size(); ++i) spec_order[i] = i;
  for (std::size_t i = 0; i < dead_order.size(); ++i) dead_order[i] = i;
  std::stable_sort(spec_order.begin(), spec_order.end(),
                   [&](std::size_t a, std::size_t b) { return ref.spec_thresholds[a] < ref.spec_thresholds[b]; });
  std::stable_sort(dead_order.begin(), dead_order.end(),
                   [&](std::size_t a, std::size_t b) { return ref.dead_thresholds[a] < ref.dead_thresholds[b]; });
  for (const std::size_t i : spec_order) {
    std::vector<std::string> cells = {format_real(ref.spec_thresholds[i])};
    for (const auto& col : sweep.columns) cells.push_back(std::to_string(col.second.specialized[i]));
    spec += join(cells);
  }
  for (const std::size_t i : dead_order) {
    std::vector<std::string> cells = {format_real(ref.dead_thresholds[i])};
    for (const auto& col : sweep.columns) cells.push_back(format_real(col.second.dead_rates[i]));
    dead += join(cells);
  }
  return {spec, dead};
}

void emit_sweep_table(const SweepOutput& sweep, const std::filesystem::path& spec_path,
                      const std::filesystem::path& dead_path) {
  const auto [spec, dead] = sweep_csvs(sweep);
  write_text_file(spec_path, spec);
  write_text_file(dead_path, dead);
}

}  // namespace sparsecollapse
