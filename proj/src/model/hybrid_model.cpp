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

#include "sparsecollapse/model/hybrid_model.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace sparsecollapse {
namespace {

Tensor glorot_uniform(int fan_out, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor w(fan_out, fan_in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
  return w;
}

Tensor random_dictionary(int rows, int cols, Rng& rng) {
  Tensor d(rows, cols);
  for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.normal();
  renormalize_columns(d);
  return d;
}

struct Layer {
  const char* name;
  int fan_in;
  int fan_out;
};

std::vector<Layer> vae_layers(const ModelConfig& c) {
  return {
      {"vae.enc1", c.input_dim, c.hidden_dim},   {"vae.enc2", c.hidden_dim, c.feature_dim},
      {"vae.mu", c.feature_dim, kLatentDim},     {"vae.logvar", c.feature_dim, kLatentDim},
      {"vae.dec1", kLatentDim, c.feature_dim},   {"vae.dec2", c.feature_dim, c.hidden_dim},
      {"vae.out", c.hidden_dim, c.input_dim},
  };
}

SaeParams make_sae(const std::string& prefix, int input_dim, const ModelConfig& c) {
  SaeParams sae;
  sae.prefix = prefix;
  sae.input_dim = input_dim;
  sae.dict_size = input_dim * c.overcomplete;
  sae.tied = c.tied_weights;
  sae.boost = Tensor::Zero(1, sae.dict_size);
  return sae;
}

Var linear(Graph& g, ParamStore& p, const std::string& layer, const Var& x) {
  return affine(x, g.param(p, layer + ".weight"), g.param(p, layer + ".bias"));
}

}  // namespace

void renormalize_columns(Tensor& dictionary) {
  for (Eigen::Index j = 0; j < dictionary.cols(); ++j) {
    const double norm = dictionary.col(j).norm();
    if (norm > 0.0) dictionary.col(j) /= norm;
  }
}

HybridModel::HybridModel(const ModelConfig& config)
    : config_(config),
      sae_feat_(make_sae("sae_feat", config.feature_dim, config)),
      sae_latent_(make_sae("sae_latent", kLatentDim, config)) {
  if (config.input_dim < 1 || config.hidden_dim < 1 || config.feature_dim < 1 ||
      config.overcomplete < 1) {
    throw ContractError("ModelConfig: dimensions must be positive");
  }
}

HybridModel::HybridModel(const ModelConfig& config, Rng init_rng) : HybridModel(config) {
  for (const auto& layer : vae_layers(config_)) {
    params_.add(std::string(layer.name) + ".weight",
                glorot_uniform(layer.fan_out, layer.fan_in, init_rng));
    params_.add(std::string(layer.name) + ".bias", Tensor::Zero(1, layer.fan_out));
  }
  for (SaeParams* sae : {&sae_feat_, &sae_latent_}) {
    params_.add(sae->dict(), random_dictionary(sae->input_dim, sae->dict_size, init_rng));
    if (!sae->tied) {
      params_.add(sae->encoder_weight(), params_.at(sae->dict()).value.transpose());
    }
    params_.add(sae->encoder_bias(), Tensor::Zero(1, sae->dict_size));
  }
}

HybridModel HybridModel::zeros(const ModelConfig& config) {
  HybridModel model(config);
  for (const auto& layer : vae_layers(config)) {
    model.params_.add(std::string(layer.name) + ".weight", Tensor::Zero(layer.fan_out, layer.fan_in));
    model.params_.add(std::string(layer.name) + ".bias", Tensor::Zero(1, layer.fan_out));
  }
  for (SaeParams* sae : {&model.sae_feat_, &model.sae_latent_}) {
    model.params_.add(sae->dict(), Tensor::Zero(sae->input_dim, sae->dict_size));
    if (!sae->tied) {
      model.params_.add(sae->encoder_weight(), Tensor::Zero(sae->dict_size, sae->input_dim));
    }
    model.params_.add(sae->encoder_bias(), Tensor::Zero(1, sae->dict_size));
  }
  return model;
}

void HybridModel::renormalize_dictionaries() {
  renormalize_columns(params_.at(sae_feat_.dict()).value);
  renormalize_columns(params_.at(sae_latent_.dict()).value);
}

EncoderOutput vae_encode(Graph& g, HybridModel& model, const Tensor& images) {
  if (images.cols() != model.config().input_dim) {
    throw DimensionError("vae_encode: images " + shape_string(images) + " but model expects " +
                         std::to_string(model.config().input_dim) + " pixels");
  }
  ParamStore& p = model.params();
  const Var x = g.constant(images);
  const Var h1 = relu(linear(g, p, "vae.enc1", x));
  const Var h = relu(linear(g, p, "vae.enc2", h1));
  const Var mu = linear(g, p, "vae.mu", h);
  const Var logvar = clamp(linear(g, p, "vae.logvar", h), kLogvarMin, kLogvarMax);
  return {h, mu, logvar};
}

Var reparameterize(const Var& mu, const Var& logvar, Rng* noise) {
  if (noise == nullptr) return mu;
  Tensor eps(mu.rows(), mu.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = noise->normal();
  Graph& g = mu.graph();
  const Var std_dev = exp(scale(logvar, 0.5));
  return add(mu, mul(std_dev, g.constant(std::move(eps))));
}

Var vae_decode(Graph& g, HybridModel& model, const Var& z) {
  ParamStore& p = model.params();
  const Var d1 = relu(linear(g, p, "vae.dec1", z));
  const Var d2 = relu(linear(g, p, "vae.dec2", d1));
  return sigmoid(linear(g, p, "vae.out", d2));
}

Var kl_divergence(const Var& mu, const Var& logvar) {
  Graph& g = mu.graph();
  const Var ones = g.constant(Tensor::Ones(mu.rows(), mu.cols()));
  return scale(sub(sub(add(square(mu), exp(logvar)), ones), logvar), 0.5);
}

ElboTerms elbo_from_parts(const Tensor& images, EncoderOutput encoded, Var z, Var reconstruction,
                          double beta, double free_bits_total) {
  Graph& g = z.graph();
  const auto batch = static_cast<double>(images.rows());
  const Var diff = sub(reconstruction, g.constant(images));
  const Var recon = scale(sum(square(diff)), 1.0 / batch);
  const Var kl_mean = mean_rows(kl_divergence(encoded.mu, encoded.logvar));
  const Var kl_term = sum(max_scalar(kl_mean, free_bits_total / kLatentDim));

  ElboTerms out;
  out.loss = add(recon, scale(kl_term, beta));
  out.reconstruction = reconstruction;
  out.encoded = encoded;
  out.z = z;
  out.recon_mse = diff.value().squaredNorm() / static_cast<double>(diff.value().size());
  out.kl_total = kl_mean.value().sum();
  return out;
}

ElboTerms elbo_loss(Graph& g, HybridModel& model, const Tensor& images, Rng* noise, double beta,
                    double free_bits_total) {
  EncoderOutput enc = vae_encode(g, model, images);
  const Var z = reparameterize(enc.mu, enc.logvar, noise);
  const Var x_hat = vae_decode(g, model, z);
  return elbo_from_parts(images, enc, z, x_hat, beta, free_bits_total);
}

std::string_view method_name(SparsityMethod method) {
  return method == SparsityMethod::TopK ? "topk" : "l1";
}

SparsityMethod parse_method(std::string_view text) {
  std::string norm;
  for (const char c : text) {
    if (c != '-' && c != '_') norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (norm == "topk") return SparsityMethod::TopK;
  if (norm == "l1") return SparsityMethod::L1;
  throw std::invalid_argument("unknown method '" + std::string(text) + "' (expected topk or l1)");
}

Var sae_encode(Graph& g, ParamStore& p, const SaeParams& sae, const Var& h) {
  if (h.cols() != sae.input_dim) {
    throw DimensionError("sae_encode: input " + shape_string(h.value()) + " but " + sae.prefix +
                         " expects " + std::to_string(sae.input_dim) + " features");
  }
  const Var weight = sae.tied ? transpose(g.param(p, sae.dict())) : g.param(p, sae.encoder_weight());
  const Var bias = add(g.param(p, sae.encoder_bias()), g.constant(sae.boost));
  return relu(affine(h, weight, bias));
}

Var topk_sparsify(const Var& a, int k) {
  if (k >= a.cols()) return a;
  return mul(a, a.graph().constant(topk_mask(a.value(), k)));
}

Var sae_decode(Graph& g, ParamStore& p, const SaeParams& sae, const Var& codes) {
  return affine(codes, g.param(p, sae.dict()));
}

SaeLossTerms sae_loss(Graph& g, ParamStore& p, const SaeParams& sae, const Var& h,
                      const SparsityMode& mode) {
  const Var a = sae_encode(g, p, sae, h);
  const Var codes = mode.method == SparsityMethod::TopK ? topk_sparsify(a, mode.k) : a;
  const Var h_hat = sae_decode(g, p, sae, codes);
  const auto batch = static_cast<double>(h.rows());
  const Var recon = scale(sum(square(sub(h, h_hat))), 1.0 / batch);
  const Var l1 = scale(sum(abs(codes)), mode.lambda / batch);

  SaeLossTerms out;
  out.loss = add(recon, l1);
  out.codes = codes;
  out.reconstruction = recon.scalar();
  out.effective_sparsity = effective_sparsity(codes.value());
  return out;
}

}  // namespace sparsecollapse
