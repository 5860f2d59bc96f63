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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace sparsecollapse {

template <typename Derived>
TensorT<typename Derived::Scalar> topk_mask(const Eigen::MatrixBase<Derived>& a, int k) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  TensorT<Scalar> mask = TensorT<Scalar>::Zero(rows, cols);
  if (k <= 0) return mask;
  if (k >= cols) {
    mask.setOnes();
    return mask;
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(cols));
  const auto kk = static_cast<std::ptrdiff_t>(k);
  for (Eigen::Index r = 0; r < rows; ++r) {
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto row = a.row(r);
    std::nth_element(idx.begin(), idx.begin() + kk - 1, idx.end(),
                     [&row](Eigen::Index i, Eigen::Index j) {
                       const Scalar ai = std::abs(row(i));
                       const Scalar aj = std::abs(row(j));
                       return ai > aj || (ai == aj && i < j);
                     });
    for (std::ptrdiff_t t = 0; t < kk; ++t) mask(r, idx[static_cast<std::size_t>(t)]) = Scalar(1);
  }
  return mask;
}

}  // namespace sparsecollapse
