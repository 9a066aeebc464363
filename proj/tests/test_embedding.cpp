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

#include <cmath>

#include "nlammr/embedding.hpp"
#include "support.hpp"

namespace nlammr {
namespace {

using testing::TempDir;

TEST(EmbeddingTable, LookupRules) {
  EmbeddingTable t(3);
  const std::vector<double> v = {1.0, -2.0, 0.5};
  t.insert("Aspirin", v);
  auto got = t.lookup("Aspirin");
  EXPECT_EQ(std::vector<double>(got.begin(), got.end()), v);
  auto zero = t.lookup("");
  EXPECT_EQ(std::vector<double>(zero.begin(), zero.end()), (std::vector<double>{0, 0, 0}));
  try {
    t.lookup("aspirin");
    FAIL() << "expected LookupError";
  } catch (const LookupError& e) {
    EXPECT_NE(std::string(e.what()).find("\"aspirin\""), std::string::npos);
  }
}

TEST(EmbeddingTable, InsertContracts) {
  EmbeddingTable t(2);
  t.insert("k", std::vector<double>{1, 2});
  EXPECT_THROW(t.insert("k", std::vector<double>{3, 4}), FormatError);
  EXPECT_THROW(t.insert("j", std::vector<double>{1}), ShapeError);
  t.freeze();
  EXPECT_THROW(t.insert("j", std::vector<double>{1, 2}), ContractError);
  EXPECT_THROW(EmbeddingTable(0), ContractError);
}

TEST(Nlaemb1, SmallRoundTripBitExact) {
  EmbeddingTable t(2);
  t.insert("k", std::vector<double>{1.0, 2.0});
  TempDir dir;
  write_embeddings(dir.file("e.bin"), t);
  EmbeddingTable back = load_embeddings(dir.file("e.bin"));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back.dim(), 2u);
  EXPECT_EQ(back.lookup("k")[0], 1.0);
  EXPECT_EQ(back.lookup("k")[1], 2.0);
  EXPECT_TRUE(back.frozen());
}

TEST(Nlaemb1, LayoutMatchesFormat) {
  EmbeddingTable t(1);
  t.insert("ab", std::vector<double>{1.0});
  const std::string b = encode_embeddings(t);
  const std::string expect("NLAEMB1\0"
                           "\x01\x00\x00\x00"
                           "\x01\x00\x00\x00"
                           "\x02\x00"
                           "ab"
                           "\x00\x00\x80\x3f",
                           8 + 4 + 4 + 2 + 2 + 4);
  EXPECT_EQ(b, expect);
}

TEST(Nlaemb1, ThousandEntriesRoundTripAtStoredPrecision) {
  Rng rng(8);
  EmbeddingTable t(7);
  std::vector<std::string> keys;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> v(7);
    for (double& x : v) x = static_cast<double>(static_cast<float>(rng.normal()));
    keys.push_back("key-" + std::to_string(i) + "-\xc3\xa9");
    t.insert(keys.back(), v);
  }
  const EmbeddingTable back = decode_embeddings(encode_embeddings(t));
  ASSERT_EQ(back.size(), t.size());
  rng.shuffle(keys);
  for (const auto& k : keys) {
    auto a = t.lookup(k), b = back.lookup(k);
    for (std::size_t d = 0; d < 7; ++d) ASSERT_EQ(a[d], b[d]) << k;
  }
  EXPECT_EQ(encode_embeddings(back), encode_embeddings(t));
}

TEST(Nlaemb1, RejectsCorruption) {
  EmbeddingTable t(2);
  t.insert("k", std::vector<double>{1.0, 2.0});
  t.insert("j", std::vector<double>{3.0, 4.0});
  const std::string good = encode_embeddings(t);

  std::string magic = good;
  magic.replace(0, 4, "XXXX");
  EXPECT_THROW(decode_embeddings(magic), FormatError);
  EXPECT_THROW(decode_embeddings("XXXX"), FormatError);
  for (std::size_t cut = 8; cut < good.size(); ++cut) {
    EXPECT_THROW(decode_embeddings(std::string_view(good).substr(0, cut)), FormatError) << cut;
  }
  EXPECT_THROW(decode_embeddings(good + "x"), FormatError);

  EmbeddingTable dup(1);
  dup.insert("a", std::vector<double>{1.0});
  dup.insert("b", std::vector<double>{1.0});
  std::string twice = encode_embeddings(dup);
  twice[16 + 7 + 2] = 'a';  // second key becomes "a"
  try {
    decode_embeddings(twice);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("\"a\""), std::string::npos);
  }
}

TEST(Nlaemb1, MissingFileIsIoError) { EXPECT_THROW(load_embeddings("/nonexistent/e.bin"), IoError); }

TEST(PseudoEmbedding, DeterministicUnitNorm) {
  const auto a = pseudo_embedding("metformin", 64, 1);
  EXPECT_EQ(a, pseudo_embedding("metformin", 64, 1));
  EXPECT_NE(a, pseudo_embedding("metformin", 64, 2));
  EXPECT_NE(a, pseudo_embedding("Metformin", 64, 1));
  double n2 = 0.0;
  for (double x : a) n2 += x * x;
  EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-9);
  EXPECT_THROW(pseudo_embedding("x", 0, 0), ContractError);
}

TEST(PseudoEmbedding, RandomKeysAreNearlyOrthogonal) {
  Rng rng(2);
  std::vector<std::vector<double>> vs;
  for (int i = 0; i < 100; ++i) {
    std::string key;
    const auto len = 1 + rng.below(20);
    for (std::uint64_t c = 0; c < len; ++c) key.push_back(static_cast<char>('a' + rng.below(26)));
    key += std::to_string(i);
    vs.push_back(pseudo_embedding(key, 64, 0));
  }
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < 64; ++d) dot += vs[i][d] * vs[j][d];
      EXPECT_LT(dot, 0.9);
    }
}

TEST(PseudoEmbedding, TableSkipsEmptyAndDuplicateKeys) {
  EmbeddingTable t = make_pseudo_table({"a", "", "b", "a"}, 8, 0);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_TRUE(t.frozen());
  auto a = t.lookup("a");
  EXPECT_EQ(std::vector<double>(a.begin(), a.end()), pseudo_embedding("a", 8, 0));
}

}  // namespace
}  // namespace nlammr
