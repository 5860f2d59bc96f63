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

#include "sparsecollapse/metrics/information.hpp"

#include "sparsecollapse/io/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace sparsecollapse {
namespace {

// Maps arbitrary integer codes onto 0..K-1, preserving order.
std::vector<int> dense_codes(std::span<const int> x, int& cardinality) {
  std::vector<int> out(x.size());
  if (x.empty()) {
    cardinality = 0;
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const long long lo = *lo_it;
  const long long range = static_cast<long long>(*hi_it) - lo + 1;
  if (range <= (1 << 16)) {
    std::vector<int> remap(static_cast<std::size_t>(range), -1);
    for (const int v : x) remap[static_cast<std::size_t>(v - lo)] = 0;
    int next = 0;
    for (auto& r : remap) {
      if (r == 0) r = next++;
    }
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = remap[static_cast<std::size_t>(x[i] - lo)];
    cardinality = next;
    return out;
  }
  std::vector<int> uniq(x.begin(), x.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), x[i]) - uniq.begin());
  }
  cardinality = static_cast<int>(uniq.size());
  return out;
}

double entropy_from_counts(std::span<const std::int64_t> counts, double n) {
  double h = 0.0;
  for (const auto c : counts) {
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

}  // namespace

std::vector<int> quantile_bins(std::span<const double> x, int bins) {
  if (bins < 1) throw ContractError("quantile_bins: bins must be >= 1");
  const std::size_t n = x.size();
  if (n < static_cast<std::size_t>(bins)) {
    throw ContractError("quantile_bins: need at least " + std::to_string(bins) + " samples, got " +
                        std::to_string(n));
  }
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  edges.reserve(static_cast<std::size_t>(bins - 1));
  for (int b = 1; b < bins; ++b) {
    edges.push_back(sorted[static_cast<std::size_t>(b) * n / static_cast<std::size_t>(bins)]);
  }
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), x[i]) - edges.begin());
  }
  return out;
}

double discrete_entropy(std::span<const int> x) {
  if (x.empty()) return 0.0;
  int k = 0;
  const auto codes = dense_codes(x, k);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
  for (const int c : codes) ++counts[static_cast<std::size_t>(c)];
  return entropy_from_counts(counts, static_cast<double>(x.size()));
}

double discrete_mutual_information(std::span<const int> x, std::span<const int> y) {
  if (x.size() != y.size()) {
    throw DimensionError("mutual information: " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + " samples");
  }
  if (x.empty()) return 0.0;
  int kx = 0;
  int ky = 0;
  const auto cx = dense_codes(x, kx);
  const auto cy = dense_codes(y, ky);
  if (kx < 2 || ky < 2) return 0.0;

  const double n = static_cast<double>(x.size());
  std::vector<std::int64_t> nx(static_cast<std::size_t>(kx), 0);
  std::vector<std::int64_t> ny(static_cast<std::size_t>(ky), 0);
  for (std::size_t i = 0; i < cx.size(); ++i) {
    ++nx[static_cast<std::size_t>(cx[i])];
    ++ny[static_cast<std::size_t>(cy[i])];
  }

  double mi = 0.0;
  auto cell = [&](std::int64_t nij, int i, int j) {
    mi += static_cast<double>(nij) / n *
          (std::log(static_cast<double>(nij)) + std::log(n) -
           std::log(static_cast<double>(nx[static_cast<std::size_t>(i)])) -
           std::log(static_cast<double>(ny[static_cast<std::size_t>(j)])));
  };

  const auto cells = static_cast<std::int64_t>(kx) * ky;
  if (cells <= (1 << 20)) {
    std::vector<std::int64_t> joint(static_cast<std::size_t>(cells), 0);
    for (std::size_t i = 0; i < cx.size(); ++i) {
      ++joint[static_cast<std::size_t>(cx[i]) * static_cast<std::size_t>(ky) + static_cast<std::size_t>(cy[i])];
    }
    for (int i = 0; i < kx; ++i) {
      for (int j = 0; j < ky; ++j) {
        const auto nij = joint[static_cast<std::size_t>(i) * static_cast<std::size_t>(ky) + static_cast<std::size_t>(j)];
        if (nij > 0) cell(nij, i, j);
      }
    }
  } else {
    std::vector<std::pair<int, int>> pairs(cx.size());
    for (std::size_t i = 0; i < cx.size(); ++i) pairs[i] = {cx[i], cy[i]};
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t s = 0; s < pairs.size();) {
      std::size_t e = s;
      while (e < pairs.size() && pairs[e] == pairs[s]) ++e;
      cell(static_cast<std::int64_t>(e - s), pairs[s].first, pairs[s].second);
      s = e;
    }
  }
  return std::max(0.0, mi);
}

double estimate_mi(std::span<const double> x, std::span<const int> y, int bins) {
  if (x.size() != y.size()) {
    throw DimensionError("estimate_mi: " + std::to_string(x.size()) + " values vs " +
                         std::to_string(y.size()) + " labels");
  }
  const auto binned = quantile_bins(x, bins);
  return discrete_mutual_information(binned, y);
}

std::vector<int> label_column(const IndexMatrix& labels, Eigen::Index col) {
  std::vector<int> out(static_cast<std::size_t>(labels.rows()));
  for (Eigen::Index r = 0; r < labels.rows(); ++r) out[static_cast<std::size_t>(r)] = labels(r, col);
  return out;
}

MigResult mig_from_mi(const Tensor& mi, std::span<const double> entropies) {
  if (static_cast<std::size_t>(mi.rows()) != entropies.size()) {
    throw DimensionError("mig: MI matrix " + shape_string(mi) + " for " +
                         std::to_string(entropies.size()) + " factors");
  }
  MigResult out;
  out.gaps.assign(entropies.size(), std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  int used = 0;
  for (Eigen::Index f = 0; f < mi.rows(); ++f) {
    const double h = entropies[static_cast<std::size_t>(f)];
    if (!(h > 0.0)) {
      out.warnings.push_back("factor " + std::to_string(f) + " has zero entropy; excluded from MIG");
      continue;
    }
    double first = 0.0;
    double second = 0.0;
    for (Eigen::Index j = 0; j < mi.cols(); ++j) {
      const double v = mi(f, j);
      if (v > first) {
        second = first;
        first = v;
      } else if (v > second) {
        second = v;
      }
    }
    const double gap = (first - second) / h;
    out.gaps[static_cast<std::size_t>(f)] = gap;
    total += gap;
    ++used;
  }
  out.mig = used > 0 ? total / used : 0.0;
  return out;
}

MigResult mig_score(const Tensor& latents, const IndexMatrix& labels, int bins) {
  if (latents.rows() != labels.rows()) {
    throw DimensionError("mig_score: latents " + shape_string(latents) + " vs labels " +
                         shape_string(labels));
  }
  const Eigen::Index factors = labels.cols();
  Tensor mi = Tensor::Zero(factors, latents.cols());
  std::vector<double> entropies(static_cast<std::size_t>(factors));
  std::vector<std::vector<int>> binned;
  binned.reserve(static_cast<std::size_t>(latents.cols()));
  for (Eigen::Index j = 0; j < latents.cols(); ++j) {
    binned.push_back(quantile_bins(column_values(latents, j), bins));
  }
  for (Eigen::Index f = 0; f < factors; ++f) {
    const auto y = label_column(labels, f);
    entropies[static_cast<std::size_t>(f)] = discrete_entropy(y);
    for (Eigen::Index j = 0; j < latents.cols(); ++j) {
      mi(f, j) = discrete_mutual_information(binned[static_cast<std::size_t>(j)], y);
    }
  }
  return mig_from_mi(mi, entropies);
}

NeuronStats neuron_stats(const Tensor& codes, const IndexMatrix& labels, int bins) {
  if (codes.rows() != labels.rows()) {
    throw DimensionError("neuron_stats: codes " + shape_string(codes) + " vs labels " +
                         shape_string(labels));
  }
  const Eigen::Index m = codes.cols();
  const auto n = static_cast<double>(codes.rows());
  NeuronStats stats;
  stats.best_normalized_mi.assign(static_cast<std::size_t>(m), 0.0);
  stats.best_factor.assign(static_cast<std::size_t>(m), -1);
  stats.activation_rate.assign(static_cast<std::size_t>(m), 0.0);

  std::vector<std::vector<int>> ys;
  std::vector<double> entropies;
  for (Eigen::Index f = 0; f < labels.cols(); ++f) {
    ys.push_back(label_column(labels, f));
    entropies.push_back(discrete_entropy(ys.back()));
  }

  for (Eigen::Index i = 0; i < m; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const auto fired = (codes.col(i).array() > 0.0).count();
    stats.activation_rate[u] = n > 0 ? static_cast<double>(fired) / n : 0.0;
    if (fired == 0) continue;  // a silent neuron carries no information
    const auto binned = quantile_bins(column_values(codes, i), bins);
    for (std::size_t f = 0; f < ys.size(); ++f) {
      if (!(entropies[f] > 0.0)) continue;
      const double v = discrete_mutual_information(binned, ys[f]) / entropies[f];
      if (v > stats.best_normalized_mi[u]) {
        stats.best_normalized_mi[u] = v;
        stats.best_factor[u] = static_cast<int>(f);
      }
    }
  }
  return stats;
}

int specialization_count(const NeuronStats& stats, double threshold) {
  if (!(threshold > 0.0)) throw ContractError("specialization threshold must be > 0");
  return static_cast<int>(std::count_if(stats.best_normalized_mi.begin(), stats.best_normalized_mi.end(),
                                        [threshold](double v) { return v > threshold; }));
}

SpecializationResult specialization_count(const Tensor& codes, const IndexMatrix& labels,
                                          double threshold, int bins) {
  const auto stats = neuron_stats(codes, labels, bins);
  return {specialization_count(stats, threshold), stats.best_normalized_mi};
}

DeadRateResult dead_rate(const NeuronStats& stats, double activation_threshold) {
  if (!(activation_threshold > 0.0 && activation_threshold < 1.0)) {
    throw ContractError("dead threshold must lie in (0, 1)");
  }
  DeadRateResult out;
  out.flags.reserve(stats.activation_rate.size());
  int dead = 0;
  for (const double r : stats.activation_rate) {
    const bool is_dead = r < activation_threshold;
    out.flags.push_back(is_dead);
    dead += is_dead ? 1 : 0;
  }
  out.rate = out.flags.empty() ? 0.0 : static_cast<double>(dead) / static_cast<double>(out.flags.size());
  return out;
}

DeadRateResult dead_rate(const Tensor& codes, double activation_threshold) {
  NeuronStats stats;
  const auto n = static_cast<double>(codes.rows());
  for (Eigen::Index i = 0; i < codes.cols(); ++i) {
    const auto fired = (codes.col(i).array() > 0.0).count();
    stats.activation_rate.push_back(n > 0 ? static_cast<double>(fired) / n : 0.0);
  }
  return dead_rate(stats, activation_threshold);
}

SweepTable threshold_sweep(const Tensor& codes, const IndexMatrix& labels,
                           std::vector<double> spec_thresholds, std::vector<double> dead_thresholds,
                           int bins) {
  if (spec_thresholds.empty() || dead_thresholds.empty()) {
    throw ContractError("threshold_sweep: threshold lists must be non-empty");
  }
  std::sort(spec_thresholds.begin(), spec_thresholds.end());
  std::sort(dead_thresholds.begin(), dead_thresholds.end());
  const auto stats = neuron_stats(codes, labels, bins);
  SweepTable table;
  table.spec_thresholds = std::move(spec_thresholds);
  table.dead_thresholds = std::move(dead_thresholds);
  for (const double t : table.spec_thresholds) table.specialized.push_back(specialization_count(stats, t));
  for (const double t : table.dead_thresholds) table.dead_rates.push_back(dead_rate(stats, t).rate);
  return table;
}

void ActivationDump::validate() const {
  if (codes.rows() == 0) throw ContractError("activation dump: N must be > 0");
  if (latents.rows() != codes.rows() || labels.rows() != codes.rows()) {
    throw ContractError("activation dump: row counts differ (codes " + shape_string(codes) +
                        ", latents " + shape_string(latents) + ", labels " + shape_string(labels) + ")");
  }
  if (static_cast<std::size_t>(labels.cols()) != cardinalities.size()) {
    throw ContractError("activation dump: label columns do not match cardinalities");
  }
  for (Eigen::Index f = 0; f < labels.cols(); ++f) {
    const int card = cardinalities[static_cast<std::size_t>(f)];
    if ((labels.col(f).array() < 0).any() || (labels.col(f).array() >= card).any()) {
      throw ContractError("activation dump: label out of range in factor " + std::to_string(f));
    }
  }
}

void write_activation_dump(const ActivationDump& dump, const std::filesystem::path& path) {
  dump.validate();
  BinaryWriter w(path);
  w.magic("SCACTS01");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(dump.codes.rows()));
  w.u32(static_cast<std::uint32_t>(dump.codes.cols()));
  w.u32(static_cast<std::uint32_t>(dump.latents.cols()));
  w.u32(static_cast<std::uint32_t>(dump.labels.cols()));
  for (const int c : dump.cardinalities) w.u32(static_cast<std::uint32_t>(c));
  for (Eigen::Index i = 0; i < dump.codes.size(); ++i) w.f64(dump.codes.data()[i]);
  for (Eigen::Index i = 0; i < dump.latents.size(); ++i) w.f64(dump.latents.data()[i]);
  for (Eigen::Index i = 0; i < dump.labels.size(); ++i) w.i32(dump.labels.data()[i]);
  w.close();
}

ActivationDump read_activation_dump(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("SCACTS01");
  if (r.u32() != 1) throw FormatError("unsupported activation dump version");
  const auto n = r.u32();
  const auto m = r.u32();
  const auto d = r.u32();
  const auto f = r.u32();
  ActivationDump dump;
  for (std::uint32_t i = 0; i < f; ++i) dump.cardinalities.push_back(static_cast<int>(r.u32()));
  dump.codes.resize(n, m);
  dump.latents.resize(n, d);
  dump.labels.resize(n, f);
  for (Eigen::Index i = 0; i < dump.codes.size(); ++i) dump.codes.data()[i] = r.f64();
  for (Eigen::Index i = 0; i < dump.latents.size(); ++i) dump.latents.data()[i] = r.f64();
  for (Eigen::Index i = 0; i < dump.labels.size(); ++i) dump.labels.data()[i] = r.i32();
  dump.validate();
  return dump;
}

}  // namespace sparsecollapse
