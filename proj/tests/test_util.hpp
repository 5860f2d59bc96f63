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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <string>

namespace sparsecollapse::testing {

inline Tensor mat(std::initializer_list<std::initializer_list<double>> rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows.begin()->size());
  Tensor t(r, c);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (const double v : row) t(i, j++) = v;
    ++i;
  }
  return t;
}

inline Tensor random_tensor(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

struct GradientCheck {
  /// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-4).
  double max_rel_error = 0.0;
  int compared = 0;
  /// Entries skipped because the stencil straddles a kink.
  int kinks = 0;
};

/// Compares analytic gradients with central differences over every
/// trainable scalar. Entries whose one-sided slopes disagree sit on a ReLU,
/// top-k or free-bits kink and are counted but not compared.
inline GradientCheck check_gradients(ParamStore& store, const std::function<Var(Graph&)>& loss_fn,
                                     double step = 1e-5) {
  store.zero_grad();
  {
    Graph g;
    backward(loss_fn(g));
  }
  auto value_at = [&]() {
    Graph g(false);
    return loss_fn(g).scalar();
  };
  const double centre = value_at();
  GradientCheck out;
  for (auto& [name, p] : store.entries()) {
    if (!p.trainable) continue;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double orig = p.value.data()[i];
      p.value.data()[i] = orig + step;
      const double up = value_at();
      p.value.data()[i] = orig - step;
      const double down = value_at();
      p.value.data()[i] = orig;
      const double forward = (up - centre) / step;
      const double backward_slope = (centre - down) / step;
      if (std::abs(forward - backward_slope) > 1e-3 * std::max(1.0, std::abs(forward))) {
        ++out.kinks;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p.grad.data()[i];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(numeric - analytic) / scale);
      ++out.compared;
    }
  }
  return out;
}

inline double max_gradient_error(ParamStore& store, const std::function<Var(Graph&)>& loss_fn,
                                 double step = 1e-5) {
  return check_gradients(store, loss_fn, step).max_rel_error;
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sparsecollapse_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

}  // namespace sparsecollapse::testing
