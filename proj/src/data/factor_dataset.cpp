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

#include "sparsecollapse/data/factor_dataset.hpp"

#include "sparsecollapse/io/binary_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sparsecollapse {
namespace {

enum class Shape { Square = 0, Disc = 1, Cross = 2 };

// Sprite and background colours are stored as bytes so that dumps
// round-trip exactly; pixel value = byte / 255.
using Rgb = std::array<int, 3>;

Rgb hue_colour(double hue) {
  static constexpr std::array<Rgb, 6> kWheel = {{
      {255, 0, 0}, {255, 255, 0}, {0, 255, 0}, {0, 255, 255}, {0, 0, 255}, {255, 0, 255}}};
  const double pos = std::fmod(hue, 1.0) * 6.0;
  const int lo = static_cast<int>(std::floor(pos)) % 6;
  const int hi = (lo + 1) % 6;
  const double frac = pos - std::floor(pos);
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<int>(std::lround(kWheel[lo][c] * (1.0 - frac) + kWheel[hi][c] * frac));
  }
  return out;
}

Rgb dimmed(const Rgb& c) { return {c[0] * 2 / 5, c[1] * 2 / 5, c[2] * 2 / 5}; }

bool inside_shape(Shape shape, int u, int v, int s) {
  const int au = std::abs(u);
  const int av = std::abs(v);
  switch (shape) {
    case Shape::Square:
      return au <= s && av <= s;
    case Shape::Disc:
      return u * u + v * v <= s * s;
    case Shape::Cross: {
      const int arm = s / 3;
      return (au <= s && av <= arm) || (av <= s && au <= arm);
    }
  }
  return false;
}

// Notch along +u: clears the tip region so that quarter turns of symmetric
// shapes render differently.
bool inside_notch(int u, int v, int s) { return 2 * u > s && std::abs(v) <= s / 3; }

struct SpriteParams {
  Shape shape = Shape::Square;
  int scale = 2;
  int quarter_turns = 0;
  int x = 0;
  int y = 0;
  double object_hue = 0.0;
  double floor_hue = 0.0;
  bool has_object_hue = false;
  bool has_floor_hue = false;
};

SpriteParams resolve(std::span<const FactorSpec> specs, std::span<const int> tuple,
                     const ImageGeometry& geometry) {
  if (tuple.size() != specs.size()) {
    throw std::out_of_range("render: tuple has " + std::to_string(tuple.size()) +
                            " entries, expected " + std::to_string(specs.size()));
  }
  SpriteParams p;
  p.x = geometry.width / 2;
  p.y = geometry.height / 2;
  for (std::size_t f = 0; f < specs.size(); ++f) {
    const FactorSpec& spec = specs[f];
    const int idx = tuple[f];
    if (idx < 0 || idx >= spec.cardinality()) {
      throw std::out_of_range("render: factor '" + spec.name + "' index " + std::to_string(idx) +
                              " outside [0, " + std::to_string(spec.cardinality()) + ")");
    }
    const double value = spec.values[static_cast<std::size_t>(idx)];
    if (spec.name == "shape") {
      p.shape = static_cast<Shape>(static_cast<int>(value));
    } else if (spec.name == "scale") {
      p.scale = static_cast<int>(value);
    } else if (spec.name == "orientation") {
      p.quarter_turns = ((static_cast<int>(std::lround(value / 90.0)) % 4) + 4) % 4;
    } else if (spec.name == "x") {
      p.x = static_cast<int>(value);
    } else if (spec.name == "y") {
      p.y = static_cast<int>(value);
    } else if (spec.name == "object_hue") {
      p.object_hue = value;
      p.has_object_hue = true;
    } else if (spec.name == "floor_hue") {
      p.floor_hue = value;
      p.has_floor_hue = true;
    } else {
      throw std::invalid_argument("render: unknown factor '" + spec.name + "'");
    }
  }
  return p;
}

std::vector<double> integer_range(int first, int count) {
  std::vector<double> v(static_cast<std::size_t>(count));
  std::iota(v.begin(), v.end(), static_cast<double>(first));
  return v;
}

}  // namespace

std::string_view preset_name(Preset preset) {
  return preset == Preset::MiniGray ? "mini-gray" : "mini-rgb";
}

Preset parse_preset(std::string_view text) {
  std::string norm;
  for (const char c : text) {
    norm.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (norm == "mini-gray") return Preset::MiniGray;
  if (norm == "mini-rgb") return Preset::MiniRgb;
  throw std::invalid_argument("unknown preset '" + std::string(text) +
                              "' (expected mini-gray or mini-rgb)");
}

int FactorDataset::factor_index(std::string_view name) const {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<FactorSpec> preset_factors(Preset preset) {
  if (preset == Preset::MiniGray) {
    return {
        {"shape", {0, 1, 2}},
        {"scale", {2, 3, 4}},
        {"orientation", {0, 90, 180, 270}},
        {"x", integer_range(4, 8)},
        {"y", integer_range(4, 8)},
    };
  }
  return {
      {"shape", {0, 1, 2}},
      {"scale", {2, 3, 4}},
      {"x", integer_range(5, 6)},
      {"y", integer_range(5, 6)},
      {"object_hue", {0.0, 0.25, 0.5, 0.75}},
      {"floor_hue", {0.125, 0.375, 0.625, 0.875}},
  };
}

ImageGeometry preset_geometry(Preset preset) {
  return preset == Preset::MiniGray ? ImageGeometry{16, 16, 1} : ImageGeometry{16, 16, 3};
}

Tensor render(std::span<const FactorSpec> specs, std::span<const int> factor_tuple,
              const ImageGeometry& geometry) {
  const SpriteParams p = resolve(specs, factor_tuple, geometry);
  const int channels = geometry.channels;
  if (channels != 1 && channels != 3) {
    throw std::invalid_argument("render: channels must be 1 or 3");
  }

  Rgb fg{255, 255, 255};
  Rgb bg{0, 0, 0};
  if (channels == 3) {
    fg = p.has_object_hue ? hue_colour(p.object_hue) : Rgb{255, 255, 255};
    bg = p.has_floor_hue ? dimmed(hue_colour(p.floor_hue)) : Rgb{0, 0, 0};
  }

  Tensor out(1, geometry.pixels());
  for (int r = 0; r < geometry.height; ++r) {
    for (int c = 0; c < geometry.width; ++c) {
      const int dx = c - p.x;
      const int dy = r - p.y;
      // Undo the rotation with exact quarter turns.
      int u = dx;
      int v = dy;
      for (int q = 0; q < p.quarter_turns; ++q) {
        const int t = u;
        u = v;
        v = -t;
      }
      const bool on = inside_shape(p.shape, u, v, p.scale) && !inside_notch(u, v, p.scale);
      const Rgb& colour = on ? fg : bg;
      const int base = (r * geometry.width + c) * channels;
      for (int ch = 0; ch < channels; ++ch) {
        out(0, base + ch) = (channels == 1 ? (on ? 255 : 0) : colour[ch]) / 255.0;
      }
    }
  }
  return out;
}

std::vector<int> grid_tuple(std::span<const FactorSpec> specs, int index) {
  std::vector<int> tuple(specs.size());
  for (std::size_t f = specs.size(); f-- > 0;) {
    const int card = specs[f].cardinality();
    tuple[f] = index % card;
    index /= card;
  }
  return tuple;
}

int grid_index(std::span<const FactorSpec> specs, std::span<const int> tuple) {
  int index = 0;
  for (std::size_t f = 0; f < specs.size(); ++f) index = index * specs[f].cardinality() + tuple[f];
  return index;
}

FactorDataset build_dataset(Preset preset, const Rng& rng) {
  FactorDataset ds;
  ds.preset = preset;
  ds.specs = preset_factors(preset);
  ds.geometry = preset_geometry(preset);

  int n = 1;
  for (const auto& s : ds.specs) n *= s.cardinality();
  const int f = ds.num_factors();
  ds.images.resize(n, ds.geometry.pixels());
  ds.labels.resize(n, f);
  for (int i = 0; i < n; ++i) {
    const auto tuple = grid_tuple(ds.specs, i);
    ds.images.row(i) = render(ds.specs, tuple, ds.geometry);
    for (int j = 0; j < f; ++j) ds.labels(i, j) = tuple[static_cast<std::size_t>(j)];
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = rng.stream("split");
  split_rng.shuffle(order.begin(), order.end());
  const auto n_train = static_cast<std::size_t>(std::floor(kTrainFraction * n));
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.validation.begin(), ds.validation.end());
  return ds;
}

Batch gather(const FactorDataset& dataset, std::span<const int> indices) {
  Batch b;
  b.indices.assign(indices.begin(), indices.end());
  const auto n = static_cast<Eigen::Index>(indices.size());
  b.images.resize(n, dataset.images.cols());
  b.labels.resize(n, dataset.labels.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    b.images.row(i) = dataset.images.row(indices[static_cast<std::size_t>(i)]);
    b.labels.row(i) = dataset.labels.row(indices[static_cast<std::size_t>(i)]);
  }
  return b;
}

BatchSampler::BatchSampler(const FactorDataset& dataset, Split split, int batch_size, Rng rng)
    : dataset_(&dataset), order_(dataset.indices(split)), batch_size_(batch_size), rng_(rng) {
  if (batch_size < 1) throw ContractError("BatchSampler: batch_size must be >= 1");
  if (static_cast<std::size_t>(batch_size) > order_.size()) {
    throw ContractError("BatchSampler: batch_size " + std::to_string(batch_size) +
                        " exceeds split size " + std::to_string(order_.size()));
  }
}

std::vector<std::vector<int>> BatchSampler::next_epoch() {
  rng_.shuffle(order_.begin(), order_.end());
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order_.size(); start += static_cast<std::size_t>(batch_size_)) {
    const std::size_t end = std::min(order_.size(), start + static_cast<std::size_t>(batch_size_));
    batches.emplace_back(order_.begin() + static_cast<std::ptrdiff_t>(start),
                         order_.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void write_dataset_dump(const FactorDataset& ds, const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.magic("SCDATA01");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(ds.geometry.height));
  w.u32(static_cast<std::uint32_t>(ds.geometry.width));
  w.u32(static_cast<std::uint32_t>(ds.geometry.channels));
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.num_factors()));
  w.str(std::string(preset_name(ds.preset)));
  for (const auto& spec : ds.specs) {
    w.str(spec.name);
    w.u32(static_cast<std::uint32_t>(spec.cardinality()));
    for (const double v : spec.values) w.f64(v);
  }
  std::vector<unsigned char> pixels(static_cast<std::size_t>(ds.images.size()));
  for (Eigen::Index i = 0; i < ds.images.size(); ++i) {
    pixels[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(std::lround(ds.images.data()[i] * 255.0));
  }
  w.bytes(pixels.data(), pixels.size());
  for (Eigen::Index i = 0; i < ds.labels.size(); ++i) w.i32(ds.labels.data()[i]);
  for (const auto* split : {&ds.train, &ds.validation}) {
    w.u32(static_cast<std::uint32_t>(split->size()));
    for (const int idx : *split) w.i32(idx);
  }
  w.close();
}

FactorDataset read_dataset_dump(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("SCDATA01");
  if (r.u32() != 1) throw FormatError("unsupported dataset dump version");
  FactorDataset ds;
  ds.geometry.height = static_cast<int>(r.u32());
  ds.geometry.width = static_cast<int>(r.u32());
  ds.geometry.channels = static_cast<int>(r.u32());
  const auto n = static_cast<int>(r.u32());
  const auto f = static_cast<int>(r.u32());
  ds.preset = parse_preset(r.str());
  for (int i = 0; i < f; ++i) {
    FactorSpec spec;
    spec.name = r.str();
    const auto card = r.u32();
    for (std::uint32_t j = 0; j < card; ++j) spec.values.push_back(r.f64());
    ds.specs.push_back(std::move(spec));
  }
  std::vector<unsigned char> pixels(static_cast<std::size_t>(n) *
                                    static_cast<std::size_t>(ds.geometry.pixels()));
  r.bytes(pixels.data(), pixels.size());
  ds.images.resize(n, ds.geometry.pixels());
  for (std::size_t i = 0; i < pixels.size(); ++i) ds.images.data()[i] = pixels[i] / 255.0;
  ds.labels.resize(n, f);
  for (Eigen::Index i = 0; i < ds.labels.size(); ++i) ds.labels.data()[i] = r.i32();
  for (auto* split : {&ds.train, &ds.validation}) {
    const auto count = r.u32();
    split->resize(count);
    for (auto& idx : *split) idx = r.i32();
  }
  return ds;
}

}  // namespace sparsecollapse
