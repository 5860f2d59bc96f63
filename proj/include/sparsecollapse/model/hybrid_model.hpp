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

#include "sparsecollapse/nn/autograd.hpp"
#include "sparsecollapse/nn/param_store.hpp"
#include "sparsecollapse/nn/rng.hpp"
#include "sparsecollapse/nn/tensor.hpp"

#include <string>

namespace sparsecollapse {

inline constexpr int kLatentDim = 10;

struct ModelConfig {
  int input_dim = 256;
  int hidden_dim = 256;
  /// Width of the shared feature layer h_flat probed by the feature SAE.
  int feature_dim = 128;
  /// Dictionary size / input size of both SAEs.
  int overcomplete = 2;
  /// Encoder weight is the transposed dictionary (W_e = D^T).
  bool tied_weights = true;
};

/// Names and control state of one sparse autoencoder inside the store.
struct SaeParams {
  std::string prefix;
  int input_dim = 0;
  int dict_size = 0;
  bool tied = true;
  /// Additive pre-activation boost [1 x m]; written by sparsity control,
  /// never trained.
  Tensor boost;

  /// Dictionary D, [input_dim x dict_size]; columns are the atoms.
  [[nodiscard]] std::string dict() const { return prefix + ".dict"; }
  /// Separate encoder weight [dict_size x input_dim], untied models only.
  [[nodiscard]] std::string encoder_weight() const { return prefix + ".enc_weight"; }
  [[nodiscard]] std::string encoder_bias() const { return prefix + ".enc_bias"; }
};

/// Fully connected VAE with a 10-d latent, a feature SAE on the last shared
/// encoder layer and a latent SAE on z. All tensors live in one ParamStore
/// under the "vae.", "sae_feat." and "sae_latent." prefixes.
class HybridModel {
 public:
  /// Glorot-uniform weights, zero biases, unit-norm random dictionaries.
  HybridModel(const ModelConfig& config, Rng init_rng);

  /// Every parameter zero, including dictionaries.
  static HybridModel zeros(const ModelConfig& config);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  [[nodiscard]] const ParamStore& params() const { return params_; }
  SaeParams& sae_feature() { return sae_feat_; }
  [[nodiscard]] const SaeParams& sae_feature() const { return sae_feat_; }
  SaeParams& sae_latent() { return sae_latent_; }
  [[nodiscard]] const SaeParams& sae_latent() const { return sae_latent_; }

  /// Rescales every dictionary column to unit L2 norm; zero columns stay.
  void renormalize_dictionaries();

 private:
  explicit HybridModel(const ModelConfig& config);

  ModelConfig config_;
  ParamStore params_;
  SaeParams sae_feat_;
  SaeParams sae_latent_;
};

void renormalize_columns(Tensor& dictionary);

// ---------------------------------------------------------------------------
// VAE

struct EncoderOutput {
  Var h;       ///< [B x feature_dim], post-ReLU
  Var mu;      ///< [B x 10]
  Var logvar;  ///< [B x 10], clamped to [-10, 10]
};

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

EncoderOutput vae_encode(Graph& graph, HybridModel& model, const Tensor& images);

/// z = mu + exp(logvar / 2) * eps. A null noise stream means eps = 0.
Var reparameterize(const Var& mu, const Var& logvar, Rng* noise);

/// Pixel reconstruction through a logistic output, values in (0, 1).
Var vae_decode(Graph& graph, HybridModel& model, const Var& z);

/// Per-dimension KL(q(z|x) || N(0, I)), [B x 10].
Var kl_divergence(const Var& mu, const Var& logvar);

/// Closed form of kl_divergence on plain values.
template <typename DerivedMu, typename DerivedLv>
auto kl_divergence_values(const Eigen::MatrixBase<DerivedMu>& mu,
                          const Eigen::MatrixBase<DerivedLv>& logvar) {
  using Scalar = typename DerivedMu::Scalar;
  return TensorT<Scalar>(
      (Scalar(0.5) * (mu.array().square() + logvar.array().exp() - Scalar(1) - logvar.array()))
          .matrix());
}

struct ElboTerms {
  Var loss;
  Var reconstruction;  ///< x_hat
  EncoderOutput encoded;
  Var z;
  double recon_mse = 0.0;
  /// Sum over dimensions of the batch-mean KL, before the free-bits floor.
  double kl_total = 0.0;
};

/// Combines an already computed forward pass into the ELBO:
///   sum_pixels (x - x_hat)^2 averaged over the batch
///   + beta * sum_j max(mean_b KL_bj, free_bits_total / latent_dim).
ElboTerms elbo_from_parts(const Tensor& images, EncoderOutput encoded, Var z, Var reconstruction,
                          double beta, double free_bits_total);

ElboTerms elbo_loss(Graph& graph, HybridModel& model, const Tensor& images, Rng* noise,
                    double beta, double free_bits_total);

// ---------------------------------------------------------------------------
// SAE

enum class SparsityMethod { TopK, L1 };

std::string_view method_name(SparsityMethod method);
SparsityMethod parse_method(std::string_view text);

/// Active sparsification: hard top-k (k retained, `lambda` is the fixed
/// lambda_sparse penalty) or pure L1 with coefficient `lambda`.
struct SparsityMode {
  SparsityMethod method = SparsityMethod::TopK;
  int k = 0;
  double lambda = 0.0;

  static SparsityMode topk(int k, double lambda_sparse) { return {SparsityMethod::TopK, k, lambda_sparse}; }
  static SparsityMode l1(double lambda) { return {SparsityMethod::L1, 0, lambda}; }
};

/// a = ReLU(W_e h + b_e + boost). The boost is a constant of the graph.
Var sae_encode(Graph& graph, ParamStore& params, const SaeParams& sae, const Var& h);

/// Keeps the k largest-magnitude entries per row; ties go to the lower
/// index. Gradient flows only through retained entries.
Var topk_sparsify(const Var& activations, int k);

/// 0/1 mask of the entries topk_sparsify retains.
template <typename Derived>
TensorT<typename Derived::Scalar> topk_mask(const Eigen::MatrixBase<Derived>& a, int k);

template <typename Derived>
TensorT<typename Derived::Scalar> topk_sparsify(const Eigen::MatrixBase<Derived>& a, int k) {
  return a.cwiseProduct(topk_mask(a, k));
}

/// h_hat = D a_tilde (no decoder bias).
Var sae_decode(Graph& graph, ParamStore& params, const SaeParams& sae, const Var& codes);

/// Codes at or below this magnitude count as zero for effective sparsity.
inline constexpr double kEffectiveSparsityThreshold = 1e-3;

struct SaeLossTerms {
  Var loss;
  Var codes;  ///< a_tilde
  double reconstruction = 0.0;  ///< batch mean of ||h - h_hat||^2
  double effective_sparsity = 0.0;
};

/// ||h - h_hat||^2 + lambda * ||a_tilde||_1, both summed per sample and
/// averaged over the batch.
SaeLossTerms sae_loss(Graph& graph, ParamStore& params, const SaeParams& sae, const Var& h,
                      const SparsityMode& mode);

template <typename Derived>
double effective_sparsity(const Eigen::MatrixBase<Derived>& codes) {
  if (codes.size() == 0) return 0.0;
  return static_cast<double>((codes.array() <= kEffectiveSparsityThreshold).count()) /
         static_cast<double>(codes.size());
}

}  // namespace sparsecollapse

#include "sparsecollapse/model/topk_impl.hpp"
