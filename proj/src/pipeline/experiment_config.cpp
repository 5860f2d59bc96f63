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

#include "sparsecollapse/pipeline/experiment_config.hpp"

#include "sparsecollapse/nn/rng.hpp"

#include <cstdio>
#include <functional>

namespace sparsecollapse {

using nlohmann::json;

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& constraint) {
    throw ConfigError("config key '" + key + "': " + constraint);
  };
  try {
    schedule.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config key 'schedule': ") + e.what());
  }
  if (seeds.empty()) fail("seeds", "must list at least one seed");
  if (stages.stage1 < 0) fail("stages.stage1", "must be >= 0");
  if (stages.stage2 < 0) fail("stages.stage2", "must be >= 0");
  if (stages.stage3 < 0) fail("stages.stage3", "must be >= 0");
  if (stages.extended < 0) fail("stages.extended", "must be >= 0");
  if (!(optimizer.lr > 0.0)) fail("optimizer.lr", "must be > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) fail("optimizer.beta1", "must lie in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) fail("optimizer.beta2", "must lie in [0, 1)");
  if (!(optimizer.weight_decay >= 0.0)) fail("optimizer.weight_decay", "must be >= 0");
  if (!(optimizer.eps > 0.0)) fail("optimizer.eps", "must be > 0");
  if (training.batch_size < 1) fail("training.batch_size", "must be >= 1");
  if (!(training.free_bits >= 0.0)) fail("training.free_bits", "must be >= 0");
  if (!(training.lambda_sparse >= 0.0)) fail("training.lambda_sparse", "must be >= 0");
  if (!(training.clip_norm > 0.0)) fail("training.clip_norm", "must be > 0");
  if (hidden_dim < 1) fail("model.hidden_dim", "must be >= 1");
  if (feature_dim < 1) fail("model.feature_dim", "must be >= 1");
  if (overcomplete < 1) fail("model.overcomplete", "must be >= 1");
  if (schedule.k_max > feature_dim * overcomplete) {
    fail("schedule.k_max", "must not exceed the feature dictionary size " +
                               std::to_string(feature_dim * overcomplete));
  }
  if (!(sparsity.b_base >= 0.0)) fail("sparsity.b_base", "must be >= 0");
  if (!(sparsity.revival.dead_rate_gate >= 0.0 && sparsity.revival.dead_rate_gate <= 1.0)) {
    fail("sparsity.revival_dead_rate", "must lie in [0, 1]");
  }
  if (sparsity.revival.inactive_epochs < 0) fail("sparsity.revival_inactive_epochs", "must be >= 0");
  if (!(sparsity.revival.noise_scale >= 0.0)) fail("sparsity.revival_noise", "must be >= 0");
  if (metrics.bins < 2) fail("metrics.bins", "must be >= 2");
  if (metrics.eval_samples < metrics.bins) fail("metrics.eval_samples", "must be >= metrics.bins");
  if (!(metrics.specialization_threshold > 0.0)) fail("metrics.specialization_threshold", "must be > 0");
  if (!(metrics.dead_threshold > 0.0 && metrics.dead_threshold < 1.0)) {
    fail("metrics.dead_threshold", "must lie in (0, 1)");
  }
  if (metrics.spec_sweep.empty()) fail("metrics.spec_sweep", "must be non-empty");
  if (metrics.dead_sweep.empty()) fail("metrics.dead_sweep", "must be non-empty");
  for (const double t : metrics.spec_sweep) {
    if (!(t > 0.0)) fail("metrics.spec_sweep", "thresholds must be > 0");
  }
  for (const double t : metrics.dead_sweep) {
    if (!(t > 0.0 && t < 1.0)) fail("metrics.dead_sweep", "thresholds must lie in (0, 1)");
  }
  if (suite.jobs < 0) fail("suite.jobs", "must be >= 0");
}

ModelConfig ExperimentConfig::model_config(Preset for_preset) const {
  ModelConfig mc;
  mc.input_dim = preset_geometry(for_preset).pixels();
  mc.hidden_dim = hidden_dim;
  mc.feature_dim = feature_dim;
  mc.overcomplete = overcomplete;
  mc.tied_weights = tied_weights;
  return mc;
}

std::vector<Preset> ExperimentConfig::suite_presets() const {
  return suite.presets.empty() ? std::vector<Preset>{preset} : suite.presets;
}

std::vector<SparsityMethod> ExperimentConfig::suite_methods() const {
  return suite.methods.empty() ? std::vector<SparsityMethod>{method} : suite.methods;
}

json to_json(const ExperimentConfig& c) {
  json presets = json::array();
  for (const auto p : c.suite.presets) presets.push_back(std::string(preset_name(p)));
  json methods = json::array();
  for (const auto m : c.suite.methods) methods.push_back(std::string(method_name(m)));
  return json{
      {"preset", std::string(preset_name(c.preset))},
      {"method", std::string(method_name(c.method))},
      {"seeds", c.seeds},
      {"schedule",
       {{"k_max", c.schedule.k_max},
        {"k_min", c.schedule.k_min},
        {"warmup_epochs", c.schedule.warmup_epochs},
        {"anneal_end_epoch", c.schedule.anneal_end_epoch},
        {"total_epochs", c.schedule.total_epochs},
        {"lambda_start", c.schedule.lambda_start},
        {"lambda_end", c.schedule.lambda_end},
        {"beta_start", c.schedule.beta_start},
        {"beta_end", c.schedule.beta_end}}},
      {"stages",
       {{"stage1", c.stages.stage1},
        {"stage2", c.stages.stage2},
        {"stage3", c.stages.stage3},
        {"extended", c.stages.extended}}},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"weight_decay", c.optimizer.weight_decay},
        {"eps", c.optimizer.eps}}},
      {"training",
       {{"batch_size", c.training.batch_size},
        {"free_bits", c.training.free_bits},
        {"lambda_sparse", c.training.lambda_sparse},
        {"clip_norm", c.training.clip_norm},
        {"weight_elbo", c.training.weight_elbo},
        {"weight_sae_feature", c.training.weight_sae_feature},
        {"weight_sae_latent", c.training.weight_sae_latent}}},
      {"model",
       {{"hidden_dim", c.hidden_dim},
        {"feature_dim", c.feature_dim},
        {"overcomplete", c.overcomplete},
        {"tied_weights", c.tied_weights}}},
      {"sparsity",
       {{"b_base", c.sparsity.b_base},
        {"boost_count_mode", std::string(boost_mode_name(c.sparsity.boost_mode))},
        {"revival_dead_rate", c.sparsity.revival.dead_rate_gate},
        {"revival_inactive_epochs", c.sparsity.revival.inactive_epochs},
        {"revival_noise", c.sparsity.revival.noise_scale}}},
      {"metrics",
       {{"bins", c.metrics.bins},
        {"eval_samples", c.metrics.eval_samples},
        {"specialization_threshold", c.metrics.specialization_threshold},
        {"dead_threshold", c.metrics.dead_threshold},
        {"spec_sweep", c.metrics.spec_sweep},
        {"dead_sweep", c.metrics.dead_sweep}}},
      {"suite",
       {{"presets", presets},
        {"methods", methods},
        {"include_extended", c.suite.include_extended},
        {"jobs", c.suite.jobs}}},
  };
}

namespace {

template <typename T>
T get(const json& j, const char* section, const char* key) {
  const json& v = section == nullptr ? j.at(key) : j.at(section).at(key);
  try {
    if constexpr (std::is_same_v<T, int>) {
      if (!v.is_number_integer()) throw ConfigError("expected an integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("expected a number");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("expected a string");
    }
    return v.get<T>();
  } catch (const std::exception& e) {
    const std::string name = section == nullptr ? key : std::string(section) + "." + key;
    throw ConfigError("config key '" + name + "': " + e.what() + " (got " + v.dump() + ")");
  }
}

}  // namespace

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.preset = parse_preset(get<std::string>(j, nullptr, "preset"));
    c.method = parse_method(get<std::string>(j, nullptr, "method"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.seeds = get<std::vector<int>>(j, nullptr, "seeds");

  c.schedule.k_max = get<int>(j, "schedule", "k_max");
  c.schedule.k_min = get<int>(j, "schedule", "k_min");
  c.schedule.warmup_epochs = get<int>(j, "schedule", "warmup_epochs");
  c.schedule.anneal_end_epoch = get<int>(j, "schedule", "anneal_end_epoch");
  c.schedule.total_epochs = get<int>(j, "schedule", "total_epochs");
  c.schedule.lambda_start = get<double>(j, "schedule", "lambda_start");
  c.schedule.lambda_end = get<double>(j, "schedule", "lambda_end");
  c.schedule.beta_start = get<double>(j, "schedule", "beta_start");
  c.schedule.beta_end = get<double>(j, "schedule", "beta_end");

  c.stages.stage1 = get<int>(j, "stages", "stage1");
  c.stages.stage2 = get<int>(j, "stages", "stage2");
  c.stages.stage3 = get<int>(j, "stages", "stage3");
  c.stages.extended = get<int>(j, "stages", "extended");

  c.optimizer.lr = get<double>(j, "optimizer", "lr");
  c.optimizer.beta1 = get<double>(j, "optimizer", "beta1");
  c.optimizer.beta2 = get<double>(j, "optimizer", "beta2");
  c.optimizer.weight_decay = get<double>(j, "optimizer", "weight_decay");
  c.optimizer.eps = get<double>(j, "optimizer", "eps");

  c.training.batch_size = get<int>(j, "training", "batch_size");
  c.training.free_bits = get<double>(j, "training", "free_bits");
  c.training.lambda_sparse = get<double>(j, "training", "lambda_sparse");
  c.training.clip_norm = get<double>(j, "training", "clip_norm");
  c.training.weight_elbo = get<double>(j, "training", "weight_elbo");
  c.training.weight_sae_feature = get<double>(j, "training", "weight_sae_feature");
  c.training.weight_sae_latent = get<double>(j, "training", "weight_sae_latent");

  c.hidden_dim = get<int>(j, "model", "hidden_dim");
  c.feature_dim = get<int>(j, "model", "feature_dim");
  c.overcomplete = get<int>(j, "model", "overcomplete");
  c.tied_weights = get<bool>(j, "model", "tied_weights");

  c.sparsity.b_base = get<double>(j, "sparsity", "b_base");
  try {
    c.sparsity.boost_mode = parse_boost_mode(get<std::string>(j, "sparsity", "boost_count_mode"));
    for (const auto& p : j.at("suite").at("presets")) c.suite.presets.push_back(parse_preset(p.get<std::string>()));
    for (const auto& m : j.at("suite").at("methods")) c.suite.methods.push_back(parse_method(m.get<std::string>()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key 'suite': ") + e.what());
  }
  c.sparsity.revival.dead_rate_gate = get<double>(j, "sparsity", "revival_dead_rate");
  c.sparsity.revival.inactive_epochs = get<int>(j, "sparsity", "revival_inactive_epochs");
  c.sparsity.revival.noise_scale = get<double>(j, "sparsity", "revival_noise");

  c.metrics.bins = get<int>(j, "metrics", "bins");
  c.metrics.eval_samples = get<int>(j, "metrics", "eval_samples");
  c.metrics.specialization_threshold = get<double>(j, "metrics", "specialization_threshold");
  c.metrics.dead_threshold = get<double>(j, "metrics", "dead_threshold");
  c.metrics.spec_sweep = get<std::vector<double>>(j, "metrics", "spec_sweep");
  c.metrics.dead_sweep = get<std::vector<double>>(j, "metrics", "dead_sweep");

  c.suite.include_extended = get<bool>(j, "suite", "include_extended");
  c.suite.jobs = get<int>(j, "suite", "jobs");
  return c;
}

std::string canonical_config(const ExperimentConfig& config) { return to_json(config).dump(); }

std::uint64_t config_hash(const ExperimentConfig& config) {
  return fnv1a64(canonical_config(config));
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::map<std::string, json> flatten(const json& j) {
  std::map<std::string, json> out;
  // Arrays are leaf values for configuration purposes.
  std::function<void(const json&, const std::string&)> walk = [&](const json& node, const std::string& prefix) {
    if (node.is_object()) {
      for (auto it = node.begin(); it != node.end(); ++it) {
        walk(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key());
      }
    } else {
      out[prefix] = node;
    }
  };
  walk(j, "");
  return out;
}

json unflatten(const std::map<std::string, json>& flat) {
  json out = json::object();
  for (const auto& [key, value] : flat) {
    json* node = &out;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return out;
}

}  // namespace sparsecollapse
