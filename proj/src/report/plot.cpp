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

#include "sparsecollapse/report/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

namespace sparsecollapse {

namespace {

constexpr double kWidth = 760.0;
constexpr double kHeight = 460.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 190.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double parse_number(const std::string& cell, const std::string& column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size() || used == 0) {
    throw std::invalid_argument("plot: column '" + column + "' has non-numeric value '" + cell + "'");
  }
  return v;
}

}  // namespace

std::string render_plot(const std::vector<CsvTable>& tables, const std::string& metric) {
  std::vector<Series> series;
  std::vector<double> boundaries;
  bool boundaries_done = false;
  std::size_t rows_seen = 0;
  for (const auto& table : tables) {
    const int col = table.column(metric);
    if (col < 0) {
      std::string available;
      for (const auto& h : table.header) available += (available.empty() ? "" : ", ") + h;
      throw std::invalid_argument("plot: unknown column '" + metric + "'; available: " + available);
    }
    const int epoch_col = table.column("epoch");
    const int run_col = table.column("run_id");
    const int stage_col = table.column("stage");
    if (epoch_col < 0 || run_col < 0) throw std::invalid_argument("plot: input lacks epoch/run_id columns");
    std::string prev_stage;
    std::string first_run;
    for (const auto& row : table.rows) {
      ++rows_seen;
      const std::string& run = row[static_cast<std::size_t>(run_col)];
      const double x = parse_number(row[static_cast<std::size_t>(epoch_col)], "epoch");
      if (!boundaries_done && stage_col >= 0) {
        if (first_run.empty()) first_run = run;
        if (run == first_run) {
          const std::string& stage = row[static_cast<std::size_t>(stage_col)];
          if (!prev_stage.empty() && stage != prev_stage) boundaries.push_back(x - 0.5);
          prev_stage = stage;
        }
      }
      auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == run; });
      if (it == series.end()) {
        series.push_back({run, {}});
        it = series.end() - 1;
      }
      const std::string& cell = row[static_cast<std::size_t>(col)];
      if (cell.empty()) continue;
      it->points.emplace_back(x, parse_number(cell, metric));
    }
    if (!first_run.empty()) boundaries_done = true;
  }
  if (rows_seen == 0) throw std::invalid_argument("plot: no data rows");

  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (!std::isfinite(x_lo)) throw std::invalid_argument("plot: column '" + metric + "' has no values");
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / 4.0;
    const double fy = y_lo + (y_hi - y_lo) * i / 4.0;
    char label[32];
    std::snprintf(label, sizeof label, "%g", std::round(fx * 100.0) / 100.0);
    svg += "<text x=\"" + num(sx(fx)) + "\" y=\"" + num(kTop + ph + 18.0) + "\" text-anchor=\"middle\">" + label +
           "</text>\n";
    std::snprintf(label, sizeof label, "%.4g", fy);
    svg += "<text x=\"" + num(kLeft - 6.0) + "\" y=\"" + num(sy(fy) + 4.0) + "\" text-anchor=\"end\">" + label +
           "</text>\n";
    svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(sy(fy)) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" +
           num(sy(fy)) + "\" stroke=\"#dddddd\"/>\n";
  }
  for (const double b : boundaries) {
    if (b < x_lo || b > x_hi) continue;
    svg += "<line x1=\"" + num(sx(b)) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(sx(b)) + "\" y2=\"" +
           num(kTop + ph) + "\" stroke=\"#555555\" stroke-dasharray=\"6,4\"/>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
    std::string pts;
    for (const auto& [x, y] : s.points) pts += (pts.empty() ? "" : " ") + num(sx(x)) + "," + num(sy(y));
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"><title>" + escape(s.name) + "</title></polyline>\n";
    const double ly = kTop + 14.0 + 18.0 * static_cast<double>(i);
    svg += "<line x1=\"" + num(kLeft + pw + 12.0) + "\" y1=\"" + num(ly - 4.0) + "\" x2=\"" + num(kLeft + pw + 32.0) +
           "\" y2=\"" + num(ly - 4.0) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kLeft + pw + 38.0) + "\" y=\"" + num(ly) + "\">" + escape(s.name) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + pw / 2.0) + "\" y=\"" + num(kHeight - 18.0) +
         "\" text-anchor=\"middle\">epoch</text>\n";
  svg += "<text x=\"18\" y=\"" + num(kTop + ph / 2.0) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         num(kTop + ph / 2.0) + ")\">" + escape(metric) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

void emit_plot(const std::vector<std::filesystem::path>& csv_paths, const std::string& metric,
               const std::filesystem::path& out_path) {
  if (csv_paths.empty()) throw std::invalid_argument("plot: no input files");
  std::vector<CsvTable> tables;
  for (const auto& p : csv_paths) tables.push_back(read_csv(p));
  write_text_file(out_path, render_plot(tables, metric));
}

}  // namespace sparsecollapse
