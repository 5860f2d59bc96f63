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

#include "sparsecollapse/io/binary_io.hpp"

namespace sparsecollapse {

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
}

void BinaryWriter::bytes(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw std::runtime_error("write failed on '" + path_.string() + "'");
}

void BinaryWriter::u32(std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  bytes(b, 4);
}

void BinaryWriter::u64(std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  bytes(b, 8);
}

void BinaryWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void BinaryWriter::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.rows()));
  u32(static_cast<std::uint32_t>(t.cols()));
  for (Eigen::Index i = 0; i < t.size(); ++i) f64(t.data()[i]);
}

void BinaryWriter::close() {
  out_.close();
  if (!out_) throw std::runtime_error("close failed on '" + path_.string() + "'");
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw std::runtime_error("cannot open '" + path.string() + "'");
}

void BinaryReader::bytes(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in_) throw FormatError("unexpected end of file in '" + path_.string() + "'");
}

void BinaryReader::expect_magic(const char (&tag)[9]) {
  char got[8];
  bytes(got, 8);
  if (std::memcmp(got, tag, 8) != 0) {
    throw FormatError("'" + path_.string() + "' is not a " + std::string(tag, 8) + " file");
  }
}

std::uint32_t BinaryReader::u32() {
  unsigned char b[4];
  bytes(b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  unsigned char b[8];
  bytes(b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string BinaryReader::str() {
  const auto n = u32();
  if (n > (1u << 20)) throw FormatError("string length out of range in '" + path_.string() + "'");
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

Tensor BinaryReader::tensor() {
  const auto rows = u32();
  const auto cols = u32();
  if (static_cast<std::uint64_t>(rows) * cols > (1ull << 31)) {
    throw FormatError("tensor size out of range in '" + path_.string() + "'");
  }
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = f64();
  return t;
}

}  // namespace sparsecollapse
