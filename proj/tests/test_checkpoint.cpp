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

#include <gtest/gtest.h>

#include <bit>
#include <cstring>

#include "nlammr/checkpoint.hpp"
#include "support.hpp"

namespace nlammr {
namespace {

using testing::micro_fixture;
using testing::small_model_config;

Model trained_looking_model(std::uint64_t seed) {
  ModelConfig c = small_model_config();
  c.init_seed = seed;
  Model m = Model::init(c, synthetic_cardinalities());
  // Values no f32 could hold, so narrowing anywhere would show.
  Rng rng(seed);
  for (auto& nt : m.named_parameters())
    for (double& v : nt.tensor.mutable_data()) v += rng.normal() * 1e-9 + 1.0 / 3.0;
  return m;
}

void expect_same_parameters(const Model& a, const Model& b) {
  auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    EXPECT_EQ(pa[k].name, pb[k].name);
    auto da = pa[k].tensor.data(), db = pb[k].tensor.data();
    ASSERT_EQ(da.size(), db.size());
    EXPECT_EQ(std::memcmp(da.data(), db.data(), da.size() * sizeof(double)), 0) << pa[k].name;
  }
}

TEST(Checkpoint, BitExactRoundTrip) {
  Model m = trained_looking_model(3);
  ojson echo = {{"seed", 3}};
  const std::string bytes = encode_checkpoint(m, echo);
  Model back = decode_checkpoint(bytes);
  expect_same_parameters(m, back);
  EXPECT_EQ(model_config_to_json(back.config), model_config_to_json(m.config));
  EXPECT_EQ(back.cards, m.cards);
  EXPECT_EQ(decode_checkpoint_header(bytes).config, echo);
  EXPECT_EQ(encode_checkpoint(back, echo), bytes);
}

TEST(Checkpoint, LayoutIsMagicLengthHeaderPayload) {
  Model m = trained_looking_model(4);
  const std::string bytes = encode_checkpoint(m);
  ASSERT_EQ(bytes.substr(0, 8), "NLACKPT1");
  std::uint64_t hlen = 0;
  for (int i = 7; i >= 0; --i) hlen = (hlen << 8) | static_cast<unsigned char>(bytes[8 + i]);
  ojson header = ojson::parse(bytes.substr(16, hlen));
  EXPECT_EQ(header["manifest"].size(), m.named_parameters().size());
  EXPECT_EQ(bytes.size() - 16 - hlen, m.num_parameters() * 8);
  // First payload value is the first manifest tensor's first entry, LE f64.
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(bytes[16 + hlen + i]);
  EXPECT_EQ(std::bit_cast<double>(bits), m.named_parameters()[0].tensor[0]);
}

TEST(Checkpoint, FileRoundTrip) {
  testing::TempDir dir;
  Model m = trained_looking_model(5);
  save_checkpoint(dir.file("m.nlackpt"), m);
  expect_same_parameters(m, load_checkpoint(dir.file("m.nlackpt")));
  EXPECT_THROW(load_checkpoint(dir.file("missing.nlackpt")), IoError);
}

TEST(Checkpoint, RejectsBadMagic) {
  std::string bytes = encode_checkpoint(trained_looking_model(6));
  bytes[3] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
  EXPECT_THROW(decode_checkpoint(""), FormatError);
}

TEST(Checkpoint, RejectsEveryTruncation) {
  const std::string bytes = encode_checkpoint(trained_looking_model(7));
  // Every cut inside the fixed fields and header, then a spread of payload cuts.
  std::vector<std::size_t> cuts;
  std::uint64_t hlen = 0;
  for (int i = 7; i >= 0; --i) hlen = (hlen << 8) | static_cast<unsigned char>(bytes[8 + i]);
  for (std::size_t n = 0; n < 16 + hlen + 8; ++n) cuts.push_back(n);
  for (std::size_t n = 16 + hlen + 8; n < bytes.size(); n += 97) cuts.push_back(n);
  cuts.push_back(bytes.size() - 1);
  for (auto n : cuts) EXPECT_THROW(decode_checkpoint(bytes.substr(0, n)), Error) << "cut at " << n;
  EXPECT_THROW(decode_checkpoint(bytes + "x"), FormatError);
}

TEST(Checkpoint, RejectsManifestMismatch) {
  const std::string bytes = encode_checkpoint(trained_looking_model(8));
  ModelConfig other = small_model_config();
  other.d_k = 10;
  Model wrong_shape = Model::init(other, synthetic_cardinalities());
  EXPECT_THROW(load_checkpoint_into(bytes, wrong_shape), CheckpointError);
  other = small_model_config();
  other.gin_layers = 3;
  Model wrong_count = Model::init(other, synthetic_cardinalities());
  EXPECT_THROW(load_checkpoint_into(bytes, wrong_count), CheckpointError);
}

TEST(Checkpoint, LoadedModelScoresIdentically) {
  auto f = micro_fixture(16);
  Model m = Model::init(small_model_config(), f->molecules.cards);
  Model back = decode_checkpoint(encode_checkpoint(m));
  ModelInputs in = f->inputs();
  auto a = predict_patients(m, in, {0, 1}, {}), b = predict_patients(back, in, {0, 1}, {});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].scores, b[i].scores);
}

}  // namespace
}  // namespace nlammr
