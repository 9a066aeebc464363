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

#include <set>

#include "nlammr/config.hpp"
#include "nlammr/synthetic.hpp"
#include "support.hpp"

namespace nlammr {
namespace {

using testing::slurp;
using testing::TempDir;

std::string corpus_bytes(const std::string& dir) {
  std::string all;
  for (const char* f : {"ehr.jsonl", "vocab_diag.jsonl", "vocab_proc.jsonl", "vocab_symp.jsonl", "vocab_med.jsonl",
                        "ddi.jsonl", "molecules.json"})
    all += std::string(f) + "\n" + slurp(dir + "/" + f);
  return all;
}

TEST(Synthetic, SameSeedByteIdentical) {
  TempDir a, b, c;
  SynthConfig cfg;
  cfg.seed = 42;
  write_corpus(a.str(), gen_synthetic(cfg));
  write_corpus(b.str(), gen_synthetic(cfg));
  EXPECT_EQ(corpus_bytes(a.str()), corpus_bytes(b.str()));
  cfg.seed = 43;
  write_corpus(c.str(), gen_synthetic(cfg));
  EXPECT_NE(corpus_bytes(a.str()), corpus_bytes(c.str()));
}

TEST(Synthetic, DefaultShape) {
  SyntheticCorpus c = gen_synthetic(SynthConfig{});
  const Dataset& ds = c.dataset;
  EXPECT_EQ(ds.patients.size(), 30u);
  EXPECT_EQ(ds.meds().size(), 10u);
  std::set<std::string> ids;
  double meds = 0;
  for (const auto& p : ds.patients) {
    EXPECT_TRUE(ids.insert(p.patient_id).second);
    EXPECT_GE(p.visits.size(), 1u);
    EXPECT_LE(p.visits.size(), 4u);
    for (const auto& v : p.visits) {
      EXPECT_FALSE(v.med().empty());
      EXPECT_TRUE(std::is_sorted(v.med().begin(), v.med().end()));
      meds += static_cast<double>(v.med().size());
    }
  }
  const double avg = meds / static_cast<double>(ds.num_visits());
  EXPECT_GE(avg, 4.0);
  EXPECT_LE(avg, 8.0);
  ASSERT_TRUE(ds.ddi.has_value());
  EXPECT_EQ(c.molecules.entries.size(), 10u);
}

TEST(Synthetic, WrittenCorpusPassesParser) {
  TempDir dir;
  SynthConfig cfg;
  cfg.seed = 7;
  cfg.n_patients = 25;
  SyntheticCorpus c = gen_synthetic(cfg);
  write_corpus(dir.str(), c);
  Dataset back = load_dataset(CorpusPaths::in_dir(dir.str()));
  EXPECT_EQ(back.patients.size(), 25u);
  EXPECT_EQ(back.ddi, c.dataset.ddi);
  MoleculeSet mols = load_molecule_file(dir.file("molecules.json"));
  auto graphs = mols.for_vocabulary(back.meds());
  EXPECT_EQ(graphs.size(), back.meds().size());
  for (const auto& g : graphs) {
    EXPECT_GE(g.num_atoms(), cfg.min_atoms);
    EXPECT_LE(g.num_atoms(), cfg.max_atoms);
  }
}

TEST(Synthetic, WithoutDdiWritesNoFile) {
  TempDir dir;
  SynthConfig cfg;
  cfg.with_ddi = false;
  write_corpus(dir.str(), gen_synthetic(cfg));
  EXPECT_FALSE(std::filesystem::exists(dir.file("ddi.jsonl")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("ehr.jsonl")));
}

TEST(Synthetic, RejectsBadConfig) {
  SynthConfig cfg;
  cfg.n_patients = 0;
  EXPECT_THROW(gen_synthetic(cfg), ValidationError);
  cfg = SynthConfig{};
  cfg.min_atoms = 9;
  cfg.max_atoms = 3;
  EXPECT_THROW(gen_synthetic(cfg), ValidationError);
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c;
  c.seed = 12;
  c.paths.corpus = "data";
  c.paths.vocabs[2] = "symptoms.jsonl";
  c.pseudo_embeddings = true;
  c.pseudo_seed = 4;
  c.model.d_k = 32;
  c.model.use_history = false;
  c.train.alpha = 0.5;
  c.train.decay = StepDecay{0.9, 5};
  c.train.selection = Selection::last;
  c.train.prediction.delta = 0.4;
  c.bootstrap_rounds = 3;
  c.synth.n_med = 14;
  const ojson j = run_config_to_json(c);
  const RunConfig back = run_config_from_json(j);
  EXPECT_EQ(run_config_to_json(back), j);
  EXPECT_EQ(back.model_config().init_seed, 12u);
  EXPECT_EQ(back.train_config().seed, 12u);
  EXPECT_EQ(back.synth_config().seed, 12u);
  EXPECT_EQ(back.eval_config().bootstrap_seed, 12u);
}

TEST(RunConfig, OverridesWinOverFile) {
  TempDir dir;
  testing::spit(dir.file("c.json"), R"({"seed": 1, "train": {"epochs": 3, "lr": 0.01}})");
  ojson patch;
  patch["train"]["epochs"] = 7;
  RunConfig c = load_run_config(dir.file("c.json"), patch);
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.train.lr, 0.01);
}

TEST(RunConfig, RejectsMalformedValues) {
  EXPECT_THROW(run_config_from_json(ojson::parse(R"({"train": {"epochs": "many"}})")), ValidationError);
  EXPECT_THROW(run_config_from_json(ojson::parse(R"({"train": {"selection": "best"}})")), ValidationError);
  EXPECT_THROW(run_config_from_json(ojson::parse("[1]")), ValidationError);
  TempDir dir;
  testing::spit(dir.file("bad.json"), "{not json");
  EXPECT_THROW(load_run_config(dir.file("bad.json")), ValidationError);
  EXPECT_THROW(load_run_config(dir.file("absent.json")), IoError);
}

TEST(RunConfig, PathResolutionAndValidation) {
  TempDir dir;
  SynthConfig sc;
  sc.with_ddi = false;
  write_corpus(dir.str(), gen_synthetic(sc));
  RunConfig c;
  c.paths.corpus = dir.str();
  c.pseudo_embeddings = true;
  EXPECT_TRUE(c.corpus_paths().ddi.empty());
  EXPECT_EQ(c.molecules_path(), dir.str() + "/molecules.json");
  EXPECT_NO_THROW(c.validate_for_model());

  RunConfig both = c;
  both.paths.embeddings = dir.file("e.nlaemb");
  EXPECT_THROW(both.validate_for_model(), ValidationError);
  RunConfig neither = c;
  neither.pseudo_embeddings = false;
  EXPECT_THROW(neither.validate_for_model(), ValidationError);
  RunConfig missing = c;
  missing.paths.ehr = dir.file("nope.jsonl");
  EXPECT_THROW(missing.validate_for_model(), IoError);
}

}  // namespace
}  // namespace nlammr
