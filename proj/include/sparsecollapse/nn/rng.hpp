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

#include <cstdint>
#include <string_view>
#include <utility>

namespace sparsecollapse {

/// Counter-based generator: draw i of a stream is a pure function of
/// (key, i), where key is derived from the seed and a purpose label. Every
/// consumer (init, batching, noise, revival, evaluation) takes its own
/// labelled stream so that consumers never perturb one another.
///
/// All derived quantities (uniform doubles, normals, shuffles) are computed
/// here rather than through <random> distributions, whose output is
/// implementation-defined.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view label);

  /// Child stream; independent of the parent's counter.
  [[nodiscard]] Rng stream(std::string_view label) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

  template <typename RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = uniform_int(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t seed, std::uint64_t key) : seed_(seed), key_(key) {}

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a; used for labels, config hashes and raster hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace sparsecollapse
