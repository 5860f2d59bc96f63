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

#include "sparsecollapse/report/config_io.hpp"

#include <fstream>
#include <sstream>

namespace sparsecollapse {

using nlohmann::json;

namespace {

std::string key_list() {
  std::string out;
  for (const auto& k : config_keys()) out += (out.empty() ? "" : ", ") + k;
  return out;
}

void assign(std::map<std::string, json>& flat, const std::string& key, json value) {
  const auto it = flat.find(key);
  if (it == flat.end()) {
    throw ConfigError("unknown config key '" + key + "'; valid keys: " + key_list());
  }
  it->second = std::move(value);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : flatten(to_json(ExperimentConfig{}))) keys.push_back(k);
  return keys;
}

ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  auto flat = flatten(to_json(ExperimentConfig{}));

  if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    for (auto& [key, value] : flatten(doc)) assign(flat, key, std::move(value));
  }

  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + item + "' is not of the form key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    assign(flat, key, std::move(value));
  }

  ExperimentConfig config = from_json(unflatten(flat));
  config.validate();
  return config;
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::string>& overrides) {
  if (!path) return parse_config_text("", overrides);
  std::ifstream in(*path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path->string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

}  // namespace sparsecollapse
