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

#include "sparsecollapse/nn/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsecollapse {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Little-endian binary writer over an ofstream.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void bytes(const void* data, std::size_t n);
  void magic(const char (&tag)[9]) { bytes(tag, 8); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s);
  /// rows, cols, then row-major f64 values.
  void tensor(const Tensor& t);
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  void bytes(void* data, std::size_t n);
  void expect_magic(const char (&tag)[9]);
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str();
  Tensor tensor();

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace sparsecollapse
