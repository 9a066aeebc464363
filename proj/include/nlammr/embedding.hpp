/*
 * Copyright 2026 The nlammr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Frozen text-embedding table and the NLAEMB1 file format.
//
// NLAEMB1 layout (little-endian, no padding):
//   magic  "NLAEMB1\0"               8 bytes
//   count  u32
//   dim    u32
//   count x { u16 key_len, key bytes (UTF-8), dim x f32 }

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nlammr/errors.hpp"
#include "nlammr/rng.hpp"

namespace nlammr {

inline constexpr std::array<char, 8> kEmbeddingMagic = {'N', 'L', 'A', 'E', 'M', 'B', '1', '\0'};

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim), zeros_(dim, 0.0) {
    if (dim == 0) throw ContractError("embedding table: dim must be >= 1");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  const std::vector<std::string>& keys() const { return keys_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // Inserts a new key. Duplicate keys are a format error (the table mirrors a
  // file, and a file must not define a key twice).
  void insert(std::string key, std::span<const double> values) {
    if (frozen_) throw ContractError("embedding table: insert into frozen table");
    if (values.size() != dim_) {
      throw ShapeError("embedding table: vector of length " + std::to_string(values.size()) +
                       " for dim " + std::to_string(dim_));
    }
    if (index_.count(key)) throw FormatError("embedding table: duplicate key \"" + key + "\"");
    index_.emplace(key, keys_.size());
    keys_.push_back(std::move(key));
    values_.insert(values_.end(), values.begin(), values.end());
  }

  bool contains(std::string_view key) const {
    return key.empty() || index_.count(std::string(key)) > 0;
  }

  // Stored vector for `key`; the empty key maps to the zero vector.
  std::span<const double> lookup(std::string_view key) const {
    if (key.empty()) return zeros_;
    auto it = index_.find(std::string(key));
    if (it == index_.end()) {
      throw LookupError("embedding table: no vector for key \"" + std::string(key) + "\"");
    }
    return {values_.data() + it->second * dim_, dim_};
  }

  std::span<const double> at(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }

 private:
  std::size_t dim_ = 0;
  bool frozen_ = false;
  std::vector<std::string> keys_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> zeros_;
};

namespace detail {

template <typename T>
void put_le(std::string& buf, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
  return static_cast<T>(u);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open \"" + path + "\" for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open \"" + path + "\" for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

inline std::string encode_embeddings(const EmbeddingTable& table) {
  std::string buf(kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(table.size()));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(table.dim()));
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string& key = table.keys()[i];
    if (key.size() > 0xffff) throw FormatError("NLAEMB1: key longer than 65535 bytes");
    detail::put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(key.size()));
    buf += key;
    for (double v : table.at(i)) {
      detail::put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return buf;
}

inline EmbeddingTable decode_embeddings(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 16 || std::memcmp(p, kEmbeddingMagic.data(), 8) != 0) {
    throw FormatError("NLAEMB1: bad magic");
  }
  const auto count = detail::get_le<std::uint32_t>(p + 8);
  const auto dim = detail::get_le<std::uint32_t>(p + 12);
  if (dim == 0) throw FormatError("NLAEMB1: dim is zero");
  EmbeddingTable table(dim);
  std::size_t off = 16;
  std::vector<double> vec(dim);
  for (std::uint32_t e = 0; e < count; ++e) {
    if (off + 2 > n) throw FormatError("NLAEMB1: truncated at entry " + std::to_string(e));
    const auto len = detail::get_le<std::uint16_t>(p + off);
    off += 2;
    if (off + len + 4ull * dim > n) throw FormatError("NLAEMB1: truncated at entry " + std::to_string(e));
    std::string key(bytes.substr(off, len));
    off += len;
    for (std::uint32_t d = 0; d < dim; ++d) {
      vec[d] = static_cast<double>(std::bit_cast<float>(detail::get_le<std::uint32_t>(p + off)));
      off += 4;
    }
    table.insert(std::move(key), vec);
  }
  if (off != n) throw FormatError("NLAEMB1: " + std::to_string(n - off) + " trailing bytes");
  table.freeze();
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  return decode_embeddings(detail::read_file_bytes(path));
}

inline void write_embeddings(const std::string& path, const EmbeddingTable& table) {
  detail::write_file_bytes(path, encode_embeddings(table));
}

// Deterministic unit-norm stand-in for a text embedding.
//
// The stream seed is FNV-1a-64 of the key bytes, xor-mixed with the seed and
// dim; SplitMix64 expands it into uniforms that feed Box-Muller normals.
// Everything is integer arithmetic up to the final transforms, so the
// output is stable across platforms.
inline std::vector<double> pseudo_embedding(std::string_view key, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ContractError("pseudo_embedding: dim must be >= 1");
  std::uint64_t state = fnv1a64(key) ^ (seed * 0x9e3779b97f4a7c15ULL) ^ (static_cast<std::uint64_t>(dim) << 32);
  auto unit = [&] { return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53; };
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    double u1 = unit();
    while (u1 <= 0.0) u1 = unit();
    const double u2 = unit();
    v[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    norm2 += v[i] * v[i];
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

// Frozen table holding pseudo-embeddings for every key in `keys`.
inline EmbeddingTable make_pseudo_table(const std::vector<std::string>& keys, std::size_t dim,
                                        std::uint64_t seed) {
  EmbeddingTable table(dim);
  for (const auto& k : keys) {
    if (k.empty() || table.contains(k)) continue;
    table.insert(k, pseudo_embedding(k, dim, seed));
  }
  table.freeze();
  return table;
}

}  // namespace nlammr
