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

#include "sparsecollapse/nn/autograd.hpp"
#include "sparsecollapse/nn/optim.hpp"
#include "sparsecollapse/nn/param_store.hpp"
#include "sparsecollapse/nn/rng.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace sparsecollapse;
using sparsecollapse::testing::mat;

TEST_CASE("affine matches hand arithmetic") {
  Graph g;
  const Var id = affine(g.constant(mat({{1, 2}})), g.constant(mat({{1, 0}, {0, 1}})), g.constant(mat({{0, 0}})));
  CHECK(id.value() == mat({{1, 2}}));

  const Var y = affine(g.constant(mat({{1, 1}})), g.constant(mat({{2, 3}})), g.constant(mat({{1}})));
  CHECK(y.value()(0, 0) == doctest::Approx(6.0));

  Rng rng(3, "affine");
  const Tensor x = testing::random_tensor(3, 4, rng);
  const Tensor b = testing::random_tensor(1, 2, rng);
  const Var z = affine(g.constant(x), g.constant(Tensor::Zero(2, 4)), g.constant(b));
  for (int r = 0; r < 3; ++r) CHECK(z.value().row(r) == b);
}

TEST_CASE("affine rejects mismatched shapes with both shapes in the message") {
  Graph g;
  try {
    (void)affine(g.constant(Tensor::Zero(2, 3)), g.constant(Tensor::Zero(4, 5)), g.constant(Tensor::Zero(1, 4)));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
    CHECK(msg.find("[4 x 5]") != std::string::npos);
  }
}

TEST_CASE("relu forward and zero subgradient") {
  Graph g;
  CHECK(relu(g.constant(mat({{-1, 0, 2}}))).value() == mat({{0, 0, 2}}));
  CHECK(relu(g.constant(mat({{-3, -0.5}}))).value() == mat({{0, 0}}));
  CHECK(relu(g.constant(mat({{0.1, 7}}))).value() == mat({{0.1, 7}}));

  ParamStore store;
  store.add("p", mat({{0.0, 1.0}}));
  Graph g2;
  backward(sum(relu(g2.param(store, "p"))));
  CHECK(store.at("p").grad == mat({{0.0, 1.0}}));
}

TEST_CASE("backward on closed-form losses") {
  ParamStore store;
  store.add("p", mat({{3.0}}));
  {
    Graph g;
    const Var p = g.param(store, "p");
    backward(mul(p, p));
    CHECK(store.at("p").grad(0, 0) == doctest::Approx(6.0));
  }
  store.zero_grad();
  {
    Graph g;
    const Var p = g.param(store, "p");
    backward(add(scale(p, 0.0), g.constant(mat({{5.0}}))));
    CHECK(store.at("p").grad(0, 0) == 0.0);
  }
  // Gradients accumulate until zeroed.
  for (int i = 0; i < 2; ++i) {
    Graph g;
    backward(scale(g.param(store, "p"), 2.0));
  }
  CHECK(store.at("p").grad(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("backward requires a scalar loss") {
  ParamStore store;
  store.add("p", mat({{1.0, 2.0}}));
  Graph g;
  CHECK_THROWS_AS(backward(g.param(store, "p")), ContractError);
}

TEST_CASE("frozen parameters receive no gradient") {
  ParamStore store;
  store.add("a.w", mat({{2.0}}));
  store.add("b.w", mat({{3.0}}));
  store.set_trainable("a.", false);
  Graph g;
  backward(mul(g.param(store, "a.w"), g.param(store, "b.w")));
  CHECK(store.at("a.w").grad(0, 0) == 0.0);
  CHECK(store.at("b.w").grad(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("two-layer network gradients match central finite differences") {
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(100 + trial, "fd-net");
    ParamStore store;
    store.add("w1", testing::random_tensor(6, 4, rng));
    store.add("b1", testing::random_tensor(1, 6, rng));
    store.add("w2", testing::random_tensor(3, 6, rng));
    store.add("b2", testing::random_tensor(1, 3, rng));
    const Tensor x = testing::random_tensor(5, 4, rng);
    const Tensor target = testing::random_tensor(5, 3, rng);
    auto loss = [&](Graph& g) {
      const Var h = relu(affine(g.constant(x), g.param(store, "w1"), g.param(store, "b1")));
      const Var y = sigmoid(affine(h, g.param(store, "w2"), g.param(store, "b2")));
      return mean(square(sub(y, g.constant(target)))) + scale(sum(abs(h)), 0.01);
    };
    const double err = testing::max_gradient_error(store, loss);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("elementwise ops gradients") {
  Rng rng(7, "ops");
  ParamStore store;
  store.add("p", testing::random_tensor(3, 4, rng));
  store.add("q", testing::random_tensor(3, 4, rng));
  store.add("r", testing::random_tensor(1, 4, rng));
  auto loss = [&](Graph& g) {
    const Var p = g.param(store, "p");
    const Var q = g.param(store, "q");
    const Var r = g.param(store, "r");
    const Var a = mul(exp(scale(p, 0.5)), clamp(q, -0.8, 0.8));
    const Var b = add_row(max_scalar(p, 0.1), r);
    return sum(mean_rows(a + b)) + mean(square(transpose(q))) - sum(scale(r, 0.3));
  };
  CHECK(testing::max_gradient_error(store, loss) < 1e-4);
}

TEST_CASE("adamw closed forms") {
  AdamWConfig cfg;
  cfg.lr = 0.01;

  ParamStore a;
  a.add("p", mat({{1.5, -2.0}}));
  cfg.weight_decay = 0.0;
  adamw_step(a, cfg);
  CHECK(a.at("p").value == mat({{1.5, -2.0}}));
  CHECK(a.step() == 1);

  ParamStore b;
  b.add("p", mat({{1.5, -2.0}}));
  cfg.weight_decay = 0.1;
  adamw_step(b, cfg);
  CHECK(b.at("p").value(0, 0) == doctest::Approx(1.5 * (1.0 - 0.01 * 0.1)).epsilon(1e-14));
  CHECK(b.at("p").value(0, 1) == doctest::Approx(-2.0 * (1.0 - 0.01 * 0.1)).epsilon(1e-14));

  ParamStore c;
  c.add("p", mat({{0.25}}));
  c.at("p").grad(0, 0) = 1.0;
  cfg.weight_decay = 0.0;
  adamw_step(c, cfg);
  CHECK(c.at("p").value(0, 0) - 0.25 == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("adamw skips frozen parameters") {
  ParamStore s;
  s.add("p", mat({{1.0}}));
  s.at("p").grad(0, 0) = 1.0;
  s.at("p").trainable = false;
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  adamw_step(s, cfg);
  CHECK(s.at("p").value(0, 0) == 1.0);
}

TEST_CASE("adamw descends a 1-d quadratic monotonically after a transient") {
  ParamStore s;
  s.add("x", mat({{4.0}}));
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  std::vector<double> losses;
  for (int i = 0; i < 100; ++i) {
    s.zero_grad();
    Graph g;
    const Var x = g.param(s, "x");
    const Var l = square(sub(x, g.constant(mat({{1.0}}))));
    losses.push_back(l.scalar());
    backward(l);
    adamw_step(s, cfg);
  }
  for (std::size_t i = 10; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-12);
  CHECK(losses.back() < 1e-2 * losses.front());
}

TEST_CASE("clip_global_norm examples") {
  ParamStore s;
  s.add("a", mat({{0.0, 0.0}}));
  CHECK(clip_global_norm(s, 1.0) == 0.0);
  CHECK(s.at("a").grad == mat({{0.0, 0.0}}));

  s.at("a").grad = mat({{0.3, 0.4}});
  CHECK(clip_global_norm(s, 1.0) == doctest::Approx(0.5));
  CHECK(s.at("a").grad == mat({{0.3, 0.4}}));

  s.at("a").grad = mat({{2.0, 0.0}});
  CHECK(clip_global_norm(s, 1.0) == doctest::Approx(2.0));
  CHECK(s.at("a").grad(0, 0) == doctest::Approx(1.0));
  CHECK(s.at("a").grad(0, 1) == 0.0);
}

TEST_CASE("clip_global_norm spans parameters and is idempotent") {
  Rng rng(5, "clip");
  ParamStore s;
  s.add("a", testing::random_tensor(3, 3, rng));
  s.add("b", testing::random_tensor(2, 5, rng));
  s.at("a").grad = 4.0 * testing::random_tensor(3, 3, rng);
  s.at("b").grad = 4.0 * testing::random_tensor(2, 5, rng);
  const double expect = std::sqrt(s.at("a").grad.squaredNorm() + s.at("b").grad.squaredNorm());
  CHECK(clip_global_norm(s, 1.0) == doctest::Approx(expect));
  const Tensor once_a = s.at("a").grad;
  const Tensor once_b = s.at("b").grad;
  CHECK(global_grad_norm(s) == doctest::Approx(1.0));
  clip_global_norm(s, 1.0);
  CHECK((s.at("a").grad - once_a).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((s.at("b").grad - once_b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(42, "x");
  Rng b(42, "x");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng parent(42, "root");
  Rng s1 = parent.stream("batches");
  (void)parent.next_u64();
  Rng s2 = parent.stream("batches");
  CHECK(s1.next_u64() == s2.next_u64());
  CHECK(parent.stream("noise").next_u64() != parent.stream("batches").next_u64());
  CHECK(Rng(42, "x").next_u64() != Rng(43, "x").next_u64());
}

TEST_CASE("rng distributions") {
  Rng r(9, "dist");
  const int n = 200000;
  double sum = 0.0;
  double sq = 0.0;
  double umin = 1.0;
  double umax = 0.0;
  std::vector<int> hist(7, 0);
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
    const double u = r.uniform();
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    ++hist[static_cast<std::size_t>(r.uniform_int(7))];
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
  CHECK(umin >= 0.0);
  CHECK(umax < 1.0);
  for (const int h : hist) CHECK(std::abs(h - n / 7.0) < 0.03 * n / 7.0);

  std::vector<int> perm(50);
  for (int i = 0; i < 50; ++i) perm[static_cast<std::size_t>(i)] = i;
  r.shuffle(perm.begin(), perm.end());
  CHECK(std::set<int>(perm.begin(), perm.end()).size() == 50);
}

TEST_CASE("identical seeds and batches give bit-identical parameters") {
  auto train = [] {
    Rng rng(11, "det");
    ParamStore s;
    s.add("w", testing::random_tensor(4, 3, rng));
    s.add("b", testing::random_tensor(1, 4, rng));
    AdamWConfig cfg;
    cfg.lr = 0.01;
    for (int step = 0; step < 20; ++step) {
      const Tensor x = testing::random_tensor(8, 3, rng);
      s.zero_grad();
      Graph g;
      backward(mean(square(relu(affine(g.constant(x), g.param(s, "w"), g.param(s, "b"))))));
      clip_global_norm(s, 1.0);
      adamw_step(s, cfg);
    }
    return s;
  };
  const ParamStore a = train();
  const ParamStore b = train();
  CHECK(a.at("w").value == b.at("w").value);
  CHECK(a.at("b").value == b.at("b").value);
}

TEST_CASE("param store contracts") {
  ParamStore s;
  s.add("x", Tensor::Ones(2, 3));
  CHECK_THROWS(s.add("x", Tensor::Ones(1, 1)));
  CHECK(s.at("x").grad.rows() == 2);
  CHECK(s.at("x").m.cols() == 3);
  CHECK(s.num_scalars() == 6);
  CHECK_THROWS(s.at("missing"));
}
