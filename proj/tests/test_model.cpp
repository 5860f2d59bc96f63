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

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace sparsecollapse;
using sparsecollapse::testing::mat;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_dim = 6;
  c.hidden_dim = 6;
  c.feature_dim = 4;
  return c;
}

Tensor random_images(int rows, int cols, Rng& rng) {
  Tensor x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  return x;
}

}  // namespace

TEST_CASE("parameter layout and dictionary sizes") {
  const HybridModel m(ModelConfig{}, Rng(1, "init"));
  CHECK(m.sae_feature().input_dim == 128);
  CHECK(m.sae_feature().dict_size == 256);
  CHECK(m.sae_latent().input_dim == kLatentDim);
  CHECK(m.sae_latent().dict_size == 20);
  CHECK(m.params().at("sae_feat.dict").value.rows() == 128);
  CHECK(m.params().at("sae_feat.dict").value.cols() == 256);
  CHECK_FALSE(m.params().contains("sae_feat.enc_weight"));
  const Tensor& d = m.params().at("sae_latent.dict").value;
  for (Eigen::Index j = 0; j < d.cols(); ++j) CHECK(std::abs(d.col(j).norm() - 1.0) < 1e-12);

  ModelConfig untied;
  untied.tied_weights = false;
  const HybridModel u(untied, Rng(1, "init"));
  CHECK(u.params().at("sae_feat.enc_weight").value.rows() == 256);
}

TEST_CASE("zero model: encode gives zero moments, decode gives one half") {
  HybridModel m = HybridModel::zeros(tiny_config());
  Rng rng(2, "x");
  const Tensor x = random_images(3, 6, rng);
  Graph g;
  const EncoderOutput e = vae_encode(g, m, x);
  CHECK(e.h.rows() == 3);
  CHECK(e.h.cols() == 4);
  CHECK(e.mu.value().isZero());
  CHECK(e.logvar.value().isZero());
  CHECK(e.mu.cols() == kLatentDim);
  const Var xh = vae_decode(g, m, e.mu);
  CHECK(xh.rows() == 3);
  CHECK(xh.cols() == 6);
  CHECK((xh.value().array() == 0.5).all());
}

TEST_CASE("encoding is row-wise deterministic") {
  HybridModel m(tiny_config(), Rng(3, "init"));
  Rng rng(3, "x");
  Tensor x = random_images(4, 6, rng);
  x.row(2) = x.row(0);
  Graph g;
  const EncoderOutput e = vae_encode(g, m, x);
  CHECK(e.mu.value().row(0) == e.mu.value().row(2));
  Graph g2;
  CHECK(vae_encode(g2, m, x).mu.value() == e.mu.value());
  const Var d1 = vae_decode(g, m, e.mu);
  const Var d2 = vae_decode(g2, m, e.mu);
  CHECK(d1.value() == d2.value());
}

TEST_CASE("reparameterization") {
  Graph g;
  const Var mu = g.constant(mat({{0.5, -1.0}}));
  CHECK(reparameterize(mu, g.constant(mat({{0.3, 2.0}})), nullptr).value() == mu.value());

  // logvar clamped at -10: z stays within a few e^-5 of mu.
  HybridModel m = HybridModel::zeros(tiny_config());
  m.params().at("vae.logvar.bias").value.setConstant(-50.0);
  Rng rng(4, "x");
  const EncoderOutput e = vae_encode(g, m, random_images(200, 6, rng));
  CHECK((e.logvar.value().array() == -10.0).all());
  Rng noise(4, "noise");
  const Var z = reparameterize(e.mu, e.logvar, &noise);
  CHECK((z.value() - e.mu.value()).cwiseAbs().maxCoeff() < 6.0 * std::exp(-5.0));

  const int n = 100000;
  Tensor zeros = Tensor::Zero(n, 1);
  Rng noise2(5, "noise");
  const Var zz = reparameterize(g.constant(zeros), g.constant(zeros), &noise2);
  const double mean = zz.value().mean();
  const double sd = std::sqrt((zz.value().array() - mean).square().sum() / (n - 1));
  CHECK(sd >= 0.99);
  CHECK(sd <= 1.01);
}

TEST_CASE("kl divergence closed forms") {
  const Tensor mu = mat({{0.0, 1.0, 0.0}});
  const Tensor lv = mat({{0.0, 0.0, std::log(4.0)}});
  Graph g;
  const Tensor kl = kl_divergence(g.constant(mu), g.constant(lv)).value();
  CHECK(kl(0, 0) == 0.0);
  CHECK(kl(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  const double oracle = 0.5 * (4.0 - 1.0 - std::log(4.0));
  CHECK(std::abs(kl(0, 2) - oracle) < 1e-15);
  CHECK(std::abs(oracle - 0.8069) < 1e-4);
  CHECK(kl_divergence_values(mu, lv) == kl);

  Rng rng(6, "kl");
  const Tensor m2 = testing::random_tensor(20, 10, rng);
  const Tensor l2 = testing::random_tensor(20, 10, rng);
  CHECK((kl_divergence_values(m2, l2).array() >= 0.0).all());
}

TEST_CASE("elbo: reconstruction term, free-bits floor and beta") {
  HybridModel m(tiny_config(), Rng(7, "init"));
  Rng rng(7, "x");
  const Tensor x = random_images(5, 6, rng);

  Graph g;
  const ElboTerms t0 = elbo_loss(g, m, x, nullptr, 0.0, 5.0);
  const double recon = (x - t0.reconstruction.value()).squaredNorm() / 5.0;
  const double half_recon = (x.array() - 0.5).square().sum() / 5.0;
  CHECK(t0.loss.scalar() == doctest::Approx(recon).epsilon(1e-14));
  CHECK(t0.recon_mse == doctest::Approx(recon / 6.0).epsilon(1e-14));

  // Zero model: every KL is zero, the floor contributes exactly 5.0.
  HybridModel z = HybridModel::zeros(tiny_config());
  const ElboTerms tz = elbo_loss(g, z, x, nullptr, 1.0, 5.0);
  CHECK(tz.kl_total == 0.0);
  CHECK(tz.loss.scalar() - half_recon == doctest::Approx(5.0).epsilon(1e-14));

  // Large means: floor inactive, KL term equals the summed batch-mean KL.
  HybridModel big = HybridModel::zeros(tiny_config());
  big.params().at("vae.mu.bias").value.setConstant(3.0);
  const ElboTerms tb = elbo_loss(g, big, x, nullptr, 0.7, 5.0);
  CHECK(tb.kl_total == doctest::Approx(10 * 4.5));
  CHECK(tb.loss.scalar() == doctest::Approx(half_recon + 0.7 * 45.0).epsilon(1e-14));

  for (int s = 0; s < 10; ++s) {
    HybridModel r(tiny_config(), Rng(100 + s, "init"));
    const ElboTerms t = elbo_loss(g, r, x, nullptr, 1.0, 5.0);
    const double recon_r = (x - t.reconstruction.value()).squaredNorm() / 5.0;
    CHECK(t.loss.scalar() - recon_r >= 5.0 - 1e-12);
  }
}

TEST_CASE("sae encode contracts") {
  HybridModel m = HybridModel::zeros(tiny_config());
  Graph g;
  const Var a = sae_encode(g, m.params(), m.sae_feature(), g.constant(Tensor::Zero(3, 4)));
  CHECK(a.rows() == 3);
  CHECK(a.cols() == 8);
  CHECK(a.value().isZero());

  HybridModel r(tiny_config(), Rng(8, "init"));
  Rng rng(8, "h");
  const Var h = g.constant(testing::random_tensor(10, 4, rng));
  const Tensor before = sae_encode(g, r.params(), r.sae_feature(), h).value();
  r.sae_feature().boost(0, 3) = 0.7;
  const Tensor after = sae_encode(g, r.params(), r.sae_feature(), h).value();
  CHECK((after.col(3).array() >= before.col(3).array()).all());
  CHECK(after.col(3).sum() > before.col(3).sum());
  CHECK(after.col(2) == before.col(2));
}

TEST_CASE("topk_sparsify examples") {
  Graph g;
  CHECK(topk_sparsify(g.constant(mat({{3, -1, 2}})), 2).value() == mat({{3, 0, 2}}));
  CHECK(topk_sparsify(g.constant(mat({{1, 1, 1}})), 1).value() == mat({{1, 0, 0}}));
  CHECK(topk_sparsify(g.constant(mat({{1, -4, 2}})), 0).value() == mat({{0, 0, 0}}));
  CHECK(topk_sparsify(g.constant(mat({{1, -4, 2}})), 3).value() == mat({{1, -4, 2}}));
  CHECK(topk_sparsify(g.constant(mat({{1, -4, 2}})), 7).value() == mat({{1, -4, 2}}));
  CHECK(topk_sparsify(mat({{0.5, -3, 0.25, 1}}), 1) == mat({{0, -3, 0, 0}}));
}

TEST_CASE("sae decode is linear in the code") {
  HybridModel m(tiny_config(), Rng(9, "init"));
  Graph g;
  const Tensor& d = m.params().at("sae_feat.dict").value;
  CHECK(sae_decode(g, m.params(), m.sae_feature(), g.constant(Tensor::Zero(2, 8))).value().isZero());
  Tensor onehot = Tensor::Zero(1, 8);
  onehot(0, 5) = 1.0;
  const Tensor col = sae_decode(g, m.params(), m.sae_feature(), g.constant(onehot)).value();
  CHECK((col.transpose() - d.col(5)).cwiseAbs().maxCoeff() < 1e-15);
  Rng rng(9, "a");
  const Tensor a = testing::random_tensor(3, 8, rng);
  const Tensor lhs = sae_decode(g, m.params(), m.sae_feature(), g.constant(2.5 * a)).value();
  const Tensor rhs = 2.5 * sae_decode(g, m.params(), m.sae_feature(), g.constant(a)).value();
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sae loss reductions") {
  HybridModel m(tiny_config(), Rng(10, "init"));
  Graph g;
  const SaeLossTerms zero = sae_loss(g, m.params(), m.sae_feature(), g.constant(Tensor::Zero(3, 4)),
                                     SparsityMode::topk(3, 0.01));
  CHECK(zero.loss.scalar() == 0.0);

  Rng rng(10, "h");
  const Var h = g.constant(testing::random_tensor(6, 4, rng).cwiseAbs());
  const SaeLossTerms full = sae_loss(g, m.params(), m.sae_feature(), h, SparsityMode::topk(8, 0.0));
  const SaeLossTerms l1 = sae_loss(g, m.params(), m.sae_feature(), h, SparsityMode::l1(0.0));
  CHECK(full.loss.scalar() == doctest::Approx(l1.loss.scalar()).epsilon(1e-14));
  CHECK(full.loss.scalar() == doctest::Approx(full.reconstruction).epsilon(1e-14));

  const double lam = 0.3;
  const SaeLossTerms pen = sae_loss(g, m.params(), m.sae_feature(), h, SparsityMode::l1(lam));
  const double l1norm = pen.codes.value().cwiseAbs().sum() / 6.0;
  CHECK(pen.loss.scalar() == doctest::Approx(pen.reconstruction + lam * l1norm).epsilon(1e-13));

  const SaeLossTerms k2 = sae_loss(g, m.params(), m.sae_feature(), h, SparsityMode::topk(2, 0.0));
  for (Eigen::Index r = 0; r < 6; ++r) CHECK((k2.codes.value().row(r).array() != 0.0).count() <= 2);
  CHECK(k2.effective_sparsity >= 1.0 - 2.0 / 8.0);
}

TEST_CASE("non-retained atoms get no reconstruction gradient") {
  HybridModel m(tiny_config(), Rng(11, "init"));
  Rng rng(11, "h");
  const Tensor h = testing::random_tensor(1, 4, rng).cwiseAbs();
  m.params().zero_grad();
  Graph g;
  const SaeLossTerms t = sae_loss(g, m.params(), m.sae_feature(), g.constant(h), SparsityMode::topk(3, 0.0));
  backward(t.loss);
  const Tensor& grad = m.params().at("sae_feat.dict").grad;
  int zero_cols = 0;
  for (Eigen::Index j = 0; j < 8; ++j) {
    if (t.codes.value()(0, j) == 0.0) {
      CHECK(grad.col(j).isZero());
      ++zero_cols;
    }
  }
  CHECK(zero_cols >= 5);
}

TEST_CASE("renormalized dictionaries have unit columns") {
  HybridModel m(tiny_config(), Rng(12, "init"));
  Rng rng(12, "d");
  m.params().at("sae_feat.dict").value = testing::random_tensor(4, 8, rng, 3.0);
  m.params().at("sae_latent.dict").value.col(0).setZero();
  m.renormalize_dictionaries();
  const Tensor& d = m.params().at("sae_feat.dict").value;
  for (Eigen::Index j = 0; j < d.cols(); ++j) CHECK(std::abs(d.col(j).norm() - 1.0) < 1e-9);
  CHECK(m.params().at("sae_latent.dict").value.col(0).isZero());
}

TEST_CASE("elbo and sae gradients match finite differences on small models") {
  for (int trial = 0; trial < 20; ++trial) {
    HybridModel m(tiny_config(), Rng(200 + trial, "init"));
    Rng rng(200 + trial, "x");
    const Tensor x = random_images(4, 6, rng);
    // Zero biases put dead rows exactly on a ReLU kink, where central differences average both sides.
    for (auto& [name, p] : m.params().entries()) {
      if (name.ends_with(".bias")) p.value = testing::random_tensor(1, p.value.cols(), rng, 0.1);
    }
    const double err = testing::max_gradient_error(m.params(), [&](Graph& g) {
      Rng noise(200 + trial, "noise");
      const ElboTerms e = elbo_loss(g, m, x, &noise, 0.6, 5.0);
      const SaeLossTerms f = sae_loss(g, m.params(), m.sae_feature(), e.encoded.h, SparsityMode::topk(5, 0.01));
      const SaeLossTerms l = sae_loss(g, m.params(), m.sae_latent(), e.z, SparsityMode::l1(0.02));
      return e.loss + f.loss + l.loss;
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("method names") {
  CHECK(parse_method("topk") == SparsityMethod::TopK);
  CHECK(parse_method("l1") == SparsityMethod::L1);
  CHECK(method_name(SparsityMethod::L1) == "l1");
  CHECK_THROWS_AS(parse_method("relu"), std::invalid_argument);
}
