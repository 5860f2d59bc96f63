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

#include "sparsecollapse/report/csv.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sparsecollapse {

/// Standalone SVG line chart of `metric` against `epoch`, one polyline per
/// run_id, with dashed rules where the stage column changes. Throws
/// std::invalid_argument for an unknown metric column (listing the
/// available ones) or when there are no data rows.
std::string render_plot(const std::vector<CsvTable>& tables, const std::string& metric);

/// Reads the epoch CSVs and writes the SVG; nothing is written on error.
void emit_plot(const std::vector<std::filesystem::path>& csv_paths, const std::string& metric,
               const std::filesystem::path& out_path);

}  // namespace sparsecollapse
