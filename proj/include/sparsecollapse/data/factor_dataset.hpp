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

#include "sparsecollapse/nn/rng.hpp"
#include "sparsecollapse/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sparsecollapse {

/// One generative factor: a name and its ordered canonical values.
struct FactorSpec {
  std::string name;
  std::vector<double> values;

  [[nodiscard]] int cardinality() const { return static_cast<int>(values.size()); }
};

enum class Preset { MiniGray, MiniRgb };

std::string_view preset_name(Preset preset);
/// Accepts "mini-gray" / "mini-rgb" (case-insensitive, '_' or '-').
Preset parse_preset(std::string_view text);

struct ImageGeometry {
  int height = 16;
  int width = 16;
  int channels = 1;

  [[nodiscard]] int pixels() const { return height * width * channels; }
};

enum class Split { Train, Validation };

/// Full factor grid with one rendered image per grid point. Immutable after
/// build_dataset().
struct FactorDataset {
  Preset preset = Preset::MiniGray;
  std::vector<FactorSpec> specs;
  ImageGeometry geometry;
  /// [N x H*W*C], row i renders labels.row(i).
  Tensor images;
  /// [N x F] factor indices.
  IndexMatrix labels;
  std::vector<int> train;
  std::vector<int> validation;

  [[nodiscard]] int size() const { return static_cast<int>(images.rows()); }
  [[nodiscard]] int num_factors() const { return static_cast<int>(specs.size()); }
  [[nodiscard]] const std::vector<int>& indices(Split split) const {
    return split == Split::Train ? train : validation;
  }
  /// Position of `name` in specs, or -1.
  [[nodiscard]] int factor_index(std::string_view name) const;
};

/// Factor list and canvas of a preset.
std::vector<FactorSpec> preset_factors(Preset preset);
ImageGeometry preset_geometry(Preset preset);

/// Rasterises one sprite as a [1 x H*W*C] row.
///
/// Recognised factor names: "shape" (0 square, 1 disc, 2 cross), "scale"
/// (half-extent in pixels), "orientation" (degrees, multiples of 90),
/// "x", "y" (integer pixel of the sprite centre), "object_hue", "floor_hue"
/// (hue in [0, 1)). Missing factors take neutral defaults. Every sprite
/// carries a notch pointing along its orientation so that rotations of
/// symmetric shapes stay distinguishable. Rendering is exact integer
/// geometry: no anti-aliasing.
Tensor render(std::span<const FactorSpec> specs, std::span<const int> factor_tuple,
              const ImageGeometry& geometry);

/// Mixed-radix enumeration of the grid; the last factor varies fastest.
std::vector<int> grid_tuple(std::span<const FactorSpec> specs, int index);
int grid_index(std::span<const FactorSpec> specs, std::span<const int> tuple);

/// Train fraction of the seeded 80-20 split; train size is floor(0.8 N).
inline constexpr double kTrainFraction = 0.8;

FactorDataset build_dataset(Preset preset, const Rng& rng);

/// Images and labels for the given dataset rows.
struct Batch {
  Tensor images;
  IndexMatrix labels;
  std::vector<int> indices;
};

Batch gather(const FactorDataset& dataset, std::span<const int> indices);

/// Epoch iterator over one split: each epoch visits the split in a fresh
/// seeded permutation and cuts it into consecutive batches; the last batch
/// may be short.
class BatchSampler {
 public:
  BatchSampler(const FactorDataset& dataset, Split split, int batch_size, Rng rng);

  /// Index lists of every batch of the next epoch.
  std::vector<std::vector<int>> next_epoch();
  [[nodiscard]] int batch_size() const { return batch_size_; }

 private:
  const FactorDataset* dataset_;
  std::vector<int> order_;
  int batch_size_;
  Rng rng_;
};

/// Binary dump: see docs/file-formats.md ("Dataset dump").
void write_dataset_dump(const FactorDataset& dataset, const std::filesystem::path& path);
FactorDataset read_dataset_dump(const std::filesystem::path& path);

}  // namespace sparsecollapse
