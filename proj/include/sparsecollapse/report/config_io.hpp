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

#include "sparsecollapse/pipeline/experiment_config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sparsecollapse {

/// Parses a JSON configuration document. Nested objects address dotted keys
/// ("schedule": {"k_min": 8} is schedule.k_min); an empty document yields
/// the defaults. Each override is "dotted.key=value" where value is read as
/// JSON, or as a plain string when it is not valid JSON. Unknown keys,
/// malformed input and violated invariants raise ConfigError.
ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});

/// As parse_config_text; no path means the defaults plus overrides.
ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::string>& overrides = {});

/// Every dotted key a configuration accepts, sorted.
std::vector<std::string> config_keys();

}  // namespace sparsecollapse
