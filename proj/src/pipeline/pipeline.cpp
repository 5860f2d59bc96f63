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

#include "sparsecollapse/pipeline/pipeline.hpp"

#include "sparsecollapse/io/binary_io.hpp"
#include "sparsecollapse/nn/optim.hpp"
#include "sparsecollapse/report/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace sparsecollapse {

namespace {

constexpr char kCheckpointMagic[9] = "SCCKPT01";
constexpr std::uint32_t kCheckpointVersion = 1;

std::string components_string(const std::vector<std::pair<std::string, double>>& parts) {
  std::ostringstream os;
  os << std::setprecision(6);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) os << ", ";
    os << parts[i].first << "=" << parts[i].second;
  }
  return os.str();
}

/// Backward pass, clipping and one AdamW step. Non-finite losses or
/// gradients abort before any parameter is touched.
void optimizer_step(Graph& graph, const Var& loss, ParamStore& params, const ExperimentConfig& cfg,
                    const std::string& where,
                    const std::vector<std::pair<std::string, double>>& parts) {
  const double value = loss.scalar();
  bool finite = std::isfinite(value);
  for (const auto& p : parts) finite = finite && std::isfinite(p.second);
  if (!finite) {
    throw TrainingError("non-finite loss at " + where + ": loss=" + std::to_string(value) + " (" +
                        components_string(parts) + ")");
  }
  graph.backward(loss);
  const double norm = clip_global_norm(params, cfg.training.clip_norm);
  if (!std::isfinite(norm)) {
    throw TrainingError("non-finite gradient norm at " + where + " (" + components_string(parts) + ")");
  }
  adamw_step(params, cfg.optimizer);
}

std::string where_string(const std::string& stage, int epoch, int batch) {
  return stage + " epoch " + std::to_string(epoch) + " batch " + std::to_string(batch);
}

void write_state(BinaryWriter& w, const SparsityState& s) {
  w.u32(static_cast<std::uint32_t>(s.size()));
  for (const auto c : s.epoch_counts) w.u64(static_cast<std::uint64_t>(c));
  for (const auto c : s.cumulative_counts) w.u64(static_cast<std::uint64_t>(c));
  for (const auto c : s.epochs_inactive) w.i32(c);
  for (const bool d : s.dead) w.u32(d ? 1U : 0U);
  w.tensor(s.boost);
  w.u64(static_cast<std::uint64_t>(s.epoch_samples));
  w.i32(s.epochs_elapsed);
  w.u32(static_cast<std::uint32_t>(s.rate_history.size()));
  for (const double r : s.rate_history) w.f64(r);
}

SparsityState read_state(BinaryReader& r) {
  const auto m = static_cast<int>(r.u32());
  SparsityState s(m);
  for (auto& c : s.epoch_counts) c = static_cast<std::int64_t>(r.u64());
  for (auto& c : s.cumulative_counts) c = static_cast<std::int64_t>(r.u64());
  for (auto& c : s.epochs_inactive) c = r.i32();
  for (std::size_t i = 0; i < s.dead.size(); ++i) s.dead[i] = r.u32() != 0U;
  s.boost = r.tensor();
  if (s.boost.rows() != 1 || s.boost.cols() != m) throw FormatError("checkpoint: boost shape mismatch");
  s.epoch_samples = static_cast<std::int64_t>(r.u64());
  s.epochs_elapsed = r.i32();
  const auto h = r.u32();
  s.rate_history.resize(h);
  for (auto& v : s.rate_history) v = r.f64();
  return s;
}

/// Keys allowed to differ when a checkpoint is resumed.
bool resumable_key(const std::string& key) {
  return key == "preset" || key == "method" || key == "seeds" || key == "stages.extended" ||
         key.rfind("metrics.", 0) == 0 || key.rfind("suite.", 0) == 0;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_meta(const RunRecord& record, const std::string& started, const std::filesystem::path& path) {
  nlohmann::json meta{
      {"run_id", record.run_id},
      {"config_hash", hash_hex(record.config_hash)},
      {"seed", record.seed},
      {"started_utc", started},
      {"finished_utc", utc_timestamp()},
      {"wall_clock_seconds", record.wall_clock_seconds},
      {"checkpoint", record.checkpoint_path},
      {"failed", record.failed},
      {"error", record.error},
  };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << meta.dump(2) << '\n';
}

}  // namespace

double ExtendedSummary::specialized_change_pct() const {
  if (init_specialized == 0 && final_specialized == 0) return 0.0;
  return 100.0 * static_cast<double>(final_specialized - init_specialized) /
         static_cast<double>(std::max(1, init_specialized));
}

const EpochRecord* RunRecord::last_of(const std::string& stage) const {
  for (auto it = epochs.rbegin(); it != epochs.rend(); ++it) {
    if (it->stage == stage) return &*it;
  }
  return nullptr;
}

const EpochRecord* RunRecord::first_of(const std::string& stage) const {
  for (const auto& e : epochs) {
    if (e.stage == stage) return &e;
  }
  return nullptr;
}

std::string make_run_id(Preset preset, SparsityMethod method, int seed) {
  return std::string(preset_name(preset)) + "_" + std::string(method_name(method)) + "_s" +
         std::to_string(seed);
}

struct ExperimentRun::EpochTotals {
  double loss = 0.0;
  double recon_mse = 0.0;
  double kl = 0.0;
  double sae_recon = 0.0;
  int batches = 0;

  void add(double l, double r, double k, double s) {
    loss += l;
    recon_mse += r;
    kl += k;
    sae_recon += s;
    ++batches;
  }
};

ExperimentRun::ExperimentRun(const ExperimentConfig& config, int seed, Preset preset, SparsityMethod method)
    : ExperimentRun(config, seed, preset, method,
                    build_dataset(preset, Rng(static_cast<std::uint64_t>(seed), "sparsecollapse").stream("data"))) {}

ExperimentRun::ExperimentRun(const ExperimentConfig& config, int seed, Preset preset, SparsityMethod method,
                             FactorDataset dataset)
    : config_(config),
      seed_(seed),
      root_(static_cast<std::uint64_t>(seed), "sparsecollapse"),
      dataset_(std::move(dataset)),
      model_(HybridModel::zeros(config.model_config(preset))) {
  config_.preset = preset;
  config_.method = method;
  config_.validate();
  if (dataset_.preset != preset) {
    throw ContractError("ExperimentRun: dataset preset " + std::string(preset_name(dataset_.preset)) +
                        " does not match " + std::string(preset_name(preset)));
  }
  model_ = HybridModel(config_.model_config(preset), root_.stream("init"));
  feature_state_ = SparsityState(model_.sae_feature().dict_size);
  latent_state_ = SparsityState(model_.sae_latent().dict_size);
  eval_sample_ = draw_eval_sample(dataset_, config_.metrics.eval_samples, root_.stream("eval"));
  mode_ = SparsityMode::topk(config_.schedule.k_max, config_.training.lambda_sparse);

  record_.run_id = make_run_id(preset, method, seed);
  record_.config_hash = config_hash(config_);
  record_.seed = seed;
  record_.preset = preset;
  record_.method = method;
}

Rng ExperimentRun::stream(const std::string& label) const { return root_.stream(label); }

SparsityMode ExperimentRun::latent_mode(const SparsityMode& feature_mode) const {
  if (feature_mode.method == SparsityMethod::L1) return feature_mode;
  return SparsityMode::topk(
      latent_k(feature_mode.k, model_.sae_latent().dict_size, model_.sae_feature().dict_size),
      feature_mode.lambda);
}

EvalSettings ExperimentRun::eval_settings(const SparsityMode& feature_mode) const {
  EvalSettings s;
  s.bins = config_.metrics.bins;
  s.samples = config_.metrics.eval_samples;
  s.specialization_threshold = config_.metrics.specialization_threshold;
  s.dead_threshold = config_.metrics.dead_threshold;
  s.feature_mode = feature_mode;
  s.latent_mode = latent_mode(feature_mode);
  return s;
}

Evaluation ExperimentRun::evaluate_now(const SparsityMode& feature_mode) const {
  return evaluate(model_, dataset_, eval_sample_, eval_settings(feature_mode));
}

SparsityMode ExperimentRun::current_mode() const { return mode_; }

void ExperimentRun::begin_stage(const std::string& stage, int epochs) {
  static const std::vector<std::string> order = {kStage1, kStage2, kStage3, kExtended};
  const auto pos = std::find(order.begin(), order.end(), stage) - order.begin();
  const std::string expected_prev = pos == 0 ? "" : order[static_cast<std::size_t>(pos - 1)];
  const std::string prev = record_.stages.empty() ? "" : record_.stages.back().stage;
  const bool ok = prev == expected_prev || (stage == kExtended && prev == kExtended);
  if (!ok) {
    throw ContractError("ExperimentRun: " + stage + " requires " +
                        (expected_prev.empty() ? std::string("a fresh run") : expected_prev) +
                        " to have completed (last stage: " + (prev.empty() ? "none" : prev) + ")");
  }
  record_.stages.push_back({stage, epochs_completed_, epochs});
}

EpochRecord ExperimentRun::finish_epoch(const std::string& stage, int stage_epoch, const SparsityMode& mode,
                                        const EpochTotals& totals, bool control) {
  const Evaluation ev = evaluate_now(mode);
  EpochRecord rec;
  rec.stage = stage;
  rec.stage_epoch = stage_epoch;
  rec.metrics = ev.report;
  rec.metrics.epoch = epochs_completed_;
  if (mode.method == SparsityMethod::TopK) {
    rec.k = mode.k;
  } else {
    rec.lambda = mode.lambda;
  }
  rec.latent_dead_rate = ev.latent_dead_rate;
  rec.latent_specialized = ev.latent_specialized;
  rec.max_normalized_mi = ev.max_normalized_mi;
  const double denom = std::max(1, totals.batches);
  rec.train_loss = totals.loss / denom;
  rec.train_recon_mse = totals.recon_mse / denom;
  rec.train_kl = totals.kl / denom;
  rec.train_sae_recon = totals.sae_recon / denom;
  if (!rec.metrics.finite()) {
    throw TrainingError("non-finite evaluation metrics at " + stage + " epoch " + std::to_string(stage_epoch));
  }

  if (control) {
    const auto samples = static_cast<std::int64_t>(dataset_.train.size());
    const Rng revival = stream("revival").stream(std::to_string(epochs_completed_));
    int revived[2] = {0, 0};
    SparsityState* states[2] = {&feature_state_, &latent_state_};
    SaeParams* saes[2] = {&model_.sae_feature(), &model_.sae_latent()};
    const std::vector<bool>* flags[2] = {&ev.feature_dead, &ev.latent_dead};
    for (int s = 0; s < 2; ++s) {
      SparsityState& state = *states[s];
      state.end_epoch();
      state.dead = *flags[s];
      state.boost = update_bias_boost(state, state.epochs_elapsed, config_.sparsity.b_base,
                                      config_.sparsity.boost_mode, samples);
      saes[s]->boost = state.boost;
      Rng rng = revival.stream(saes[s]->prefix);
      revived[s] = revive_dead_neurons(state, *saes[s], model_.params(), rng, config_.sparsity.revival);
    }
    rec.revived = revived[0];
    rec.latent_revived = revived[1];
    rec.boost_mean = feature_state_.boost.mean();
  }
  ++epochs_completed_;
  record_.epochs.push_back(rec);
  return rec;
}

std::vector<EpochRecord> ExperimentRun::run_stage1() {
  const int epochs = config_.stages.stage1;
  begin_stage(kStage1, epochs);
  const auto t0 = std::chrono::steady_clock::now();
  ParamStore& params = model_.params();
  params.set_trainable("vae.", true);
  params.set_trainable("sae_", false);

  BatchSampler sampler(dataset_, Split::Train, config_.training.batch_size, stream("stage1.batches"));
  Rng noise = stream("stage1.noise");
  const SparsityMode eval_mode = SparsityMode::topk(config_.schedule.k_max, config_.training.lambda_sparse);
  std::vector<EpochRecord> out;
  for (int e = 0; e < epochs; ++e) {
    const double beta = schedule_beta(e, std::max(epochs - 1, 1), config_.schedule);
    EpochTotals totals;
    int b = 0;
    for (const auto& idx : sampler.next_epoch()) {
      const Batch batch = gather(dataset_, idx);
      params.zero_grad();
      Graph g;
      const ElboTerms t = elbo_loss(g, model_, batch.images, &noise, beta, config_.training.free_bits);
      optimizer_step(g, t.loss, params, config_, where_string(kStage1, e, b++),
                     {{"recon_mse", t.recon_mse}, {"kl", t.kl_total}, {"beta", beta}});
      totals.add(t.loss.scalar(), t.recon_mse, t.kl_total, 0.0);
    }
    EpochRecord rec = finish_epoch(kStage1, e, eval_mode, totals, false);
    rec.beta = beta;
    record_.epochs.back().beta = beta;
    out.push_back(rec);
  }
  mode_ = eval_mode;
  record_.wall_clock_seconds[kStage1] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<EpochRecord> ExperimentRun::run_stage2() {
  const int epochs = config_.stages.stage2;
  begin_stage(kStage2, epochs);
  const auto t0 = std::chrono::steady_clock::now();
  ParamStore& params = model_.params();
  params.set_trainable("vae.", false);
  params.set_trainable("sae_", true);

  BatchSampler sampler(dataset_, Split::Train, config_.training.batch_size, stream("stage2.batches"));
  Rng noise = stream("stage2.noise");
  const SparsityMode mode = SparsityMode::topk(config_.schedule.k_max, config_.training.lambda_sparse);
  const SparsityMode lat = latent_mode(mode);
  const double wf = config_.training.weight_sae_feature;
  const double wl = config_.training.weight_sae_latent;
  std::vector<EpochRecord> out;
  for (int e = 0; e < epochs; ++e) {
    EpochTotals totals;
    int b = 0;
    for (const auto& idx : sampler.next_epoch()) {
      const Batch batch = gather(dataset_, idx);
      params.zero_grad();
      Graph g;
      const EncoderOutput enc = vae_encode(g, model_, batch.images);
      const Var z = reparameterize(enc.mu, enc.logvar, &noise);
      const SaeLossTerms f = sae_loss(g, params, model_.sae_feature(), enc.h, mode);
      const SaeLossTerms l = sae_loss(g, params, model_.sae_latent(), z, lat);
      const Var loss = wf * f.loss + wl * l.loss;
      optimizer_step(g, loss, params, config_, where_string(kStage2, e, b++),
                     {{"sae_feature", f.loss.scalar()}, {"sae_latent", l.loss.scalar()}});
      model_.renormalize_dictionaries();
      totals.add(loss.scalar(), 0.0, 0.0, f.reconstruction);
    }
    out.push_back(finish_epoch(kStage2, e, mode, totals, false));
  }
  mode_ = mode;
  record_.wall_clock_seconds[kStage2] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<EpochRecord> ExperimentRun::joint_epochs(const std::string& stage, int epochs, bool extended,
                                                     const std::function<void(EpochRecord&)>& after_epoch) {
  ParamStore& params = model_.params();
  params.set_trainable("vae.", true);
  params.set_trainable("sae_", true);

  BatchSampler sampler(dataset_, Split::Train, config_.training.batch_size, stream(stage + ".batches"));
  Rng noise = stream(stage + ".noise");
  const ScheduleConfig& sc = config_.schedule;
  const bool topk = config_.method == SparsityMethod::TopK;
  const double beta = sc.beta_end;
  const auto& tc = config_.training;
  std::vector<EpochRecord> out;
  for (int e = 0; e < epochs; ++e) {
    SparsityMode mode;
    if (extended) {
      mode = topk ? SparsityMode::topk(sc.k_min, tc.lambda_sparse) : SparsityMode::l1(sc.lambda_end);
    } else {
      mode = topk ? SparsityMode::topk(schedule_k(stage3_epochs_done_, sc), tc.lambda_sparse)
                  : SparsityMode::l1(schedule_lambda(stage3_epochs_done_, sc));
    }
    const SparsityMode lat = latent_mode(mode);
    EpochTotals totals;
    int b = 0;
    for (const auto& idx : sampler.next_epoch()) {
      const Batch batch = gather(dataset_, idx);
      params.zero_grad();
      Graph g;
      EncoderOutput enc = vae_encode(g, model_, batch.images);
      const Var z = reparameterize(enc.mu, enc.logvar, &noise);
      const Var x_hat = vae_decode(g, model_, z);
      const ElboTerms elbo = elbo_from_parts(batch.images, std::move(enc), z, x_hat, beta, tc.free_bits);
      const SaeLossTerms f = sae_loss(g, params, model_.sae_feature(), elbo.encoded.h, mode);
      const SaeLossTerms l = sae_loss(g, params, model_.sae_latent(), elbo.z, lat);
      const Var loss = tc.weight_elbo * elbo.loss + tc.weight_sae_feature * f.loss + tc.weight_sae_latent * l.loss;
      feature_state_.record_batch(f.codes.value());
      latent_state_.record_batch(l.codes.value());
      optimizer_step(g, loss, params, config_, where_string(stage, e, b++),
                     {{"elbo", elbo.loss.scalar()},
                      {"recon_mse", elbo.recon_mse},
                      {"kl", elbo.kl_total},
                      {"sae_feature", f.loss.scalar()},
                      {"sae_latent", l.loss.scalar()}});
      model_.renormalize_dictionaries();
      totals.add(loss.scalar(), elbo.recon_mse, elbo.kl_total, f.reconstruction);
    }
    EpochRecord rec = finish_epoch(stage, e, mode, totals, true);
    record_.epochs.back().beta = beta;
    rec.beta = beta;
    if (after_epoch) after_epoch(rec);
    out.push_back(rec);
    if (extended) {
      ++extended_epochs_done_;
    } else {
      ++stage3_epochs_done_;
    }
    mode_ = mode;
  }
  return out;
}

std::vector<EpochRecord> ExperimentRun::run_stage3() {
  const int epochs = config_.stages.stage3;
  begin_stage(kStage3, epochs);
  const auto t0 = std::chrono::steady_clock::now();
  auto out = joint_epochs(kStage3, epochs, false);
  record_.wall_clock_seconds[kStage3] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<EpochRecord> ExperimentRun::run_extended(int epochs) {
  if (epochs < 0) throw ContractError("run_extended: negative epoch count");
  begin_stage(kExtended, epochs);
  const auto t0 = std::chrono::steady_clock::now();
  const ScheduleConfig& sc = config_.schedule;
  const SparsityMode fixed = config_.method == SparsityMethod::TopK
                                 ? SparsityMode::topk(sc.k_min, config_.training.lambda_sparse)
                                 : SparsityMode::l1(sc.lambda_end);
  const Evaluation init = evaluate_now(fixed);
  std::vector<int> initially_dead;
  for (std::size_t i = 0; i < init.feature_dead.size(); ++i) {
    if (init.feature_dead[i]) initially_dead.push_back(static_cast<int>(i));
  }

  ExtendedSummary summary;
  summary.init_dead_rate = init.report.dead_rate;
  summary.init_specialized = init.report.specialized_count;
  summary.initially_dead = static_cast<int>(initially_dead.size());
  summary.final_dead_rate = summary.init_dead_rate;
  summary.final_specialized = summary.init_specialized;

  auto out = joint_epochs(kExtended, epochs, true, [&](EpochRecord& rec) {
    int still_dead = 0;
    for (const int i : initially_dead) still_dead += feature_state_.dead[static_cast<std::size_t>(i)] ? 1 : 0;
    summary.survival.push_back(initially_dead.empty()
                                   ? 0.0
                                   : static_cast<double>(still_dead) / static_cast<double>(initially_dead.size()));
    summary.final_dead_rate = rec.metrics.dead_rate;
    summary.final_specialized = rec.metrics.specialized_count;
  });
  record_.extended = summary;
  record_.wall_clock_seconds[kExtended] +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void ExperimentRun::save_checkpoint(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.str(canonical_config(config_));
  w.u64(config_hash(config_));
  w.i32(seed_);
  w.str(std::string(preset_name(config_.preset)));
  w.str(std::string(method_name(config_.method)));
  const ModelConfig& mc = model_.config();
  w.i32(mc.input_dim);
  w.i32(mc.hidden_dim);
  w.i32(mc.feature_dim);
  w.i32(mc.overcomplete);
  w.u32(mc.tied_weights ? 1U : 0U);
  w.i32(epochs_completed_);
  w.i32(stage3_epochs_done_);
  w.i32(extended_epochs_done_);
  w.str(std::string(method_name(mode_.method)));
  w.i32(mode_.k);
  w.f64(mode_.lambda);
  w.u32(static_cast<std::uint32_t>(record_.stages.size()));
  for (const auto& s : record_.stages) {
    w.str(s.stage);
    w.i32(s.first_epoch);
    w.i32(s.epochs);
  }
  const ParamStore& params = model_.params();
  w.u64(params.step());
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params.entries()) {
    w.str(name);
    w.u32(p.trainable ? 1U : 0U);
    w.tensor(p.value);
    w.tensor(p.m);
    w.tensor(p.v);
  }
  write_state(w, feature_state_);
  write_state(w, latent_state_);
  w.close();
}

ExperimentRun ExperimentRun::load_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config) {
  BinaryReader r(path);
  r.expect_magic(kCheckpointMagic);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  ExperimentConfig stored;
  try {
    stored = from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": corrupt config (" + e.what() + ")");
  }
  const std::uint64_t stored_hash = r.u64();
  if (stored_hash != config_hash(stored)) throw FormatError("checkpoint " + path.string() + ": config hash mismatch");

  std::vector<std::string> differing;
  for (const auto& key : config_diff(stored, config)) {
    if (!resumable_key(key)) differing.push_back(key);
  }
  if (!differing.empty()) {
    std::string list;
    for (const auto& k : differing) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("checkpoint " + path.string() + " was trained with config " + hash_hex(stored_hash) +
                      " but the current config is " + hash_hex(config_hash(config)) +
                      "; differing keys: " + list);
  }

  const int seed = r.i32();
  const Preset preset = parse_preset(r.str());
  const SparsityMethod method = parse_method(r.str());
  ExperimentConfig merged = config;
  ExperimentRun run(merged, seed, preset, method);

  const ModelConfig& mc = run.model_.config();
  const int dims[4] = {r.i32(), r.i32(), r.i32(), r.i32()};
  const bool tied = r.u32() != 0U;
  if (dims[0] != mc.input_dim || dims[1] != mc.hidden_dim || dims[2] != mc.feature_dim ||
      dims[3] != mc.overcomplete || tied != mc.tied_weights) {
    throw FormatError("checkpoint " + path.string() + ": architecture does not match the configuration");
  }
  run.epochs_completed_ = r.i32();
  run.stage3_epochs_done_ = r.i32();
  run.extended_epochs_done_ = r.i32();
  run.mode_.method = parse_method(r.str());
  run.mode_.k = r.i32();
  run.mode_.lambda = r.f64();
  const auto n_stages = r.u32();
  for (std::uint32_t i = 0; i < n_stages; ++i) {
    StageBoundary s;
    s.stage = r.str();
    s.first_epoch = r.i32();
    s.epochs = r.i32();
    run.record_.stages.push_back(s);
  }
  ParamStore& params = run.model_.params();
  params.set_step(r.u64());
  const auto n_params = r.u32();
  if (n_params != params.size()) throw FormatError("checkpoint " + path.string() + ": parameter count mismatch");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = r.str();
    if (!params.contains(name)) throw FormatError("checkpoint " + path.string() + ": unknown parameter " + name);
    Parameter& p = params.at(name);
    p.trainable = r.u32() != 0U;
    Tensor value = r.tensor();
    Tensor m = r.tensor();
    Tensor v = r.tensor();
    if (value.rows() != p.value.rows() || value.cols() != p.value.cols() || m.rows() != value.rows() ||
        m.cols() != value.cols() || v.rows() != value.rows() || v.cols() != value.cols()) {
      throw FormatError("checkpoint " + path.string() + ": shape mismatch for " + name);
    }
    p.value = std::move(value);
    p.m = std::move(m);
    p.v = std::move(v);
    p.grad.setZero();
  }
  run.feature_state_ = read_state(r);
  run.latent_state_ = read_state(r);
  if (run.feature_state_.size() != run.model_.sae_feature().dict_size ||
      run.latent_state_.size() != run.model_.sae_latent().dict_size) {
    throw FormatError("checkpoint " + path.string() + ": sparsity state size mismatch");
  }
  run.model_.sae_feature().boost = run.feature_state_.boost;
  run.model_.sae_latent().boost = run.latent_state_.boost;
  return run;
}

std::vector<std::string> config_diff(const ExperimentConfig& a, const ExperimentConfig& b) {
  const auto fa = flatten(to_json(a));
  const auto fb = flatten(to_json(b));
  std::vector<std::string> keys;
  for (const auto& [key, value] : fa) {
    const auto it = fb.find(key);
    if (it == fb.end() || it->second != value) keys.push_back(key);
  }
  for (const auto& [key, value] : fb) {
    if (fa.find(key) == fa.end()) keys.push_back(key);
  }
  return keys;
}

RunRecord run_pipeline(const ExperimentConfig& config, int seed, Preset preset, SparsityMethod method,
                       const std::filesystem::path& out_dir, bool with_extended) {
  const std::string started = utc_timestamp();
  RunRecord record;
  record.run_id = make_run_id(preset, method, seed);
  record.seed = seed;
  record.preset = preset;
  record.method = method;
  std::filesystem::path dir;
  if (!out_dir.empty()) {
    dir = out_dir / record.run_id;
    std::filesystem::create_directories(dir);
  }
  std::optional<ExperimentRun> run;
  try {
    run.emplace(config, seed, preset, method);
    run->run_stage1();
    run->run_stage2();
    run->run_stage3();
    if (!dir.empty()) {
      run->save_checkpoint(dir / "stage3.ckpt");
      run->record().checkpoint_path = (dir / "stage3.ckpt").string();
    }
    if (with_extended) {
      run->run_extended(config.stages.extended);
      if (!dir.empty()) {
        run->save_checkpoint(dir / "extended.ckpt");
        run->record().checkpoint_path = (dir / "extended.ckpt").string();
      }
    }
    record = run->record();
  } catch (const std::exception& e) {
    if (run) record = run->record();
    record.failed = true;
    record.error = e.what();
  }
  if (!dir.empty()) {
    emit_epoch_csv(record, dir / "epochs.csv");
    emit_diagnostics_csv(record, dir / "diagnostics.csv");
    if (record.extended) emit_survival_csv(record, dir / "survival.csv");
    write_meta(record, started, dir / "meta.json");
  }
  return record;
}

std::vector<RunRecord> run_suite(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  struct Job {
    Preset preset;
    SparsityMethod method;
    int seed;
  };
  std::vector<Job> jobs;
  for (const Preset p : config.suite_presets()) {
    for (const SparsityMethod m : config.suite_methods()) {
      for (const int s : config.seeds) jobs.push_back({p, m, s});
    }
  }
  std::vector<RunRecord> records(jobs.size());
  const unsigned hw = std::max(1U, std::thread::hardware_concurrency());
  const auto workers = static_cast<std::size_t>(
      std::min<std::size_t>(jobs.size(), config.suite.jobs > 0 ? static_cast<std::size_t>(config.suite.jobs) : hw));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      records[i] = run_pipeline(config, jobs[i].seed, jobs[i].preset, jobs[i].method, out_dir,
                                config.suite.include_extended);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (!out_dir.empty()) {
    emit_summary(records, out_dir / "summary.csv");
    emit_seed_summary(records, out_dir / "summary_seeds.csv");
  }
  return records;
}

}  // namespace sparsecollapse
