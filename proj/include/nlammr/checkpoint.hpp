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

// NLACKPT1 checkpoint files:
//   magic "NLACKPT1"                 8 bytes
//   header_len u64 (little-endian)
//   header     UTF-8 JSON: {"model": ..., "cardinalities": ..., "manifest":
//              [{"name", "shape"}...], "config": ...}
//   payload    every manifest tensor in order, little-endian f64, row-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "json.hpp"
#include "nlammr/embedding.hpp"
#include "nlammr/model.hpp"

namespace nlammr {

inline constexpr std::array<char, 8> kCheckpointMagic = {'N', 'L', 'A', 'C', 'K', 'P', 'T', '1'};

inline ojson cardinalities_to_json(const FeatureCardinalities& c) {
  ojson j;
  j["atom"] = c.atom;
  j["bond"] = c.bond;
  return j;
}

inline FeatureCardinalities cardinalities_from_json(const ojson& j) {
  FeatureCardinalities c;
  if (j.at("atom").size() != kAtomFeatures || j.at("bond").size() != kBondFeatures) {
    throw CheckpointError("checkpoint: bad feature cardinalities");
  }
  for (std::size_t k = 0; k < kAtomFeatures; ++k) c.atom[k] = j.at("atom")[k].get<int>();
  for (std::size_t k = 0; k < kBondFeatures; ++k) c.bond[k] = j.at("bond")[k].get<int>();
  return c;
}

// `run_config` is stored verbatim for provenance.
inline std::string encode_checkpoint(const Model& model, const ojson& run_config = ojson::object()) {
  ojson header;
  header["model"] = model_config_to_json(model.config);
  header["cardinalities"] = cardinalities_to_json(model.cards);
  header["manifest"] = ojson::array();
  const auto params = model.named_parameters();
  for (const auto& nt : params) {
    ojson e;
    e["name"] = nt.name;
    e["shape"] = nt.tensor.shape();
    header["manifest"].push_back(std::move(e));
  }
  header["config"] = run_config;
  const std::string hjson = header.dump();

  std::string buf(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint64_t>(buf, hjson.size());
  buf += hjson;
  for (const auto& nt : params)
    for (double v : nt.tensor.data()) detail::put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(v));
  return buf;
}

struct CheckpointHeader {
  ModelConfig model;
  FeatureCardinalities cards;
  ojson manifest;
  ojson config;
  std::size_t payload_offset = 0;
};

inline CheckpointHeader decode_checkpoint_header(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(p, kCheckpointMagic.data(), 8) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto hlen = detail::get_le<std::uint64_t>(p + 8);
  if (hlen > bytes.size() - 16) throw FormatError("checkpoint: truncated header");
  CheckpointHeader h;
  try {
    const ojson header = ojson::parse(bytes.substr(16, hlen));
    model_config_from_json(header.at("model"), h.model);
    h.cards = cardinalities_from_json(header.at("cardinalities"));
    h.manifest = header.at("manifest");
    h.config = header.value("config", ojson::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  h.payload_offset = 16 + hlen;
  return h;
}

// Copies the payload into `model`, which must have the exact manifest
// (names and shapes) recorded in the file.
inline void load_checkpoint_into(std::string_view bytes, Model& model) {
  const CheckpointHeader h = decode_checkpoint_header(bytes);
  auto params = model.named_parameters();
  if (h.manifest.size() != params.size()) {
    throw CheckpointError("checkpoint: " + std::to_string(h.manifest.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  std::size_t need = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& e = h.manifest[k];
    const std::string name = e.at("name").get<std::string>();
    const Shape shape = e.at("shape").get<Shape>();
    if (name != params[k].name || shape != params[k].tensor.shape()) {
      throw CheckpointError("checkpoint: tensor " + std::to_string(k) + " is " + name + " " + shape_str(shape) +
                            ", model expects " + params[k].name + " " + shape_str(params[k].tensor.shape()));
    }
    need += params[k].tensor.numel();
  }
  if (bytes.size() - h.payload_offset != need * 8) {
    throw FormatError("checkpoint: payload holds " + std::to_string(bytes.size() - h.payload_offset) +
                      " bytes, expected " + std::to_string(need * 8));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
  for (auto& nt : params) {
    for (double& v : nt.tensor.mutable_data()) {
      v = std::bit_cast<double>(detail::get_le<std::uint64_t>(p));
      p += 8;
    }
  }
}

// Rebuilds the model described by the header and fills in its weights.
inline Model decode_checkpoint(std::string_view bytes) {
  const CheckpointHeader h = decode_checkpoint_header(bytes);
  Model m = Model::init(h.model, h.cards);
  load_checkpoint_into(bytes, m);
  return m;
}

inline void save_checkpoint(const std::string& path, const Model& model, const ojson& run_config = ojson::object()) {
  detail::write_file_bytes(path, encode_checkpoint(model, run_config));
}

inline Model load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file_bytes(path)); }

}  // namespace nlammr
