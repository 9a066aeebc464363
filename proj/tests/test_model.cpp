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

#include "nlammr/metrics.hpp"
#include "nlammr/model.hpp"
#include "support.hpp"

namespace nlammr {
namespace {

using testing::micro_fixture;
using testing::small_model_config;

TEST(ModelConfig, JsonRoundTripAndValidation) {
  ModelConfig c = small_model_config();
  c.use_history = false;
  c.history_window = 3;
  ModelConfig back;
  model_config_from_json(model_config_to_json(c), back);
  EXPECT_EQ(model_config_to_json(back), model_config_to_json(c));
  ModelConfig bad = c;
  bad.d_k = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = c;
  bad.use_structure = bad.use_text = false;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Model, ManifestNamesUniqueAndStable) {
  auto f = micro_fixture(16);
  Model a = Model::init(small_model_config(), f->molecules.cards);
  Model b = Model::init(small_model_config(), f->molecules.cards);
  std::set<std::string> names;
  for (const auto& nt : a.named_parameters()) EXPECT_TRUE(names.insert(nt.name).second) << nt.name;
  auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    EXPECT_EQ(pa[k].name, pb[k].name);
    EXPECT_EQ(pa[k].tensor.to_vector(), pb[k].tensor.to_vector());
  }
}

TEST(Model, CloneIsDeepCopy) {
  auto f = micro_fixture(16);
  Model a = Model::init(small_model_config(), f->molecules.cards);
  Model b = a.clone();
  Tensor w = a.named_parameters()[0].tensor;
  w.mutable_data()[0] += 1.0;
  EXPECT_NE(a.named_parameters()[0].tensor[0], b.named_parameters()[0].tensor[0]);
}

TEST(Model, TextAblationShrinksMedicationInput) {
  ModelConfig c = small_model_config();
  EXPECT_EQ(c.med_input_dim(), c.d_s + c.d_enc);
  c.use_text = false;
  EXPECT_EQ(c.med_input_dim(), c.d_s);
  c.use_text = true;
  c.use_structure = false;
  EXPECT_EQ(c.med_input_dim(), c.d_enc);
}

TEST(Model, ScoresHaveVisitByMedicationShape) {
  auto f = micro_fixture(16);
  ModelInputs in = f->inputs();
  Model m = Model::init(small_model_config(), f->molecules.cards);
  const ForwardContext ctx{};
  Tensor med = medication_projection(m, in, ctx);
  EXPECT_EQ(med.shape(), (Shape{5, 8}));
  for (const auto& p : f->dataset.patients) {
    Tensor s = patient_scores(m, in, p, med, ctx);
    EXPECT_EQ(s.shape(), (Shape{p.visits.size(), 5}));
    for (double x : s.data()) {
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, 1.0);
    }
  }
}

TEST(Model, PastTextsRespectWindow) {
  auto f = micro_fixture(16);
  PatientRecord p = f->dataset.patients[1];
  p.visits.push_back(p.visits[0]);
  p.visits.push_back(p.visits[1]);
  EXPECT_TRUE(past_medication_texts(p, 0, f->dataset, 0).empty());
  EXPECT_EQ(past_medication_texts(p, 3, f->dataset, 0).size(), 3u);
  auto last2 = past_medication_texts(p, 3, f->dataset, 2);
  ASSERT_EQ(last2.size(), 2u);
  EXPECT_EQ(last2[0], visit_text(p.visits[1], f->dataset, CodeKind::medication));
  EXPECT_EQ(last2[1], visit_text(p.visits[2], f->dataset, CodeKind::medication));
}

// Changing the prescription of visit t must not move the scores of visit t.
TEST(Model, CurrentLabelsDoNotLeakIntoScores) {
  auto f = micro_fixture(16);
  Model m = Model::init(small_model_config(), f->molecules.cards);
  ModelInputs in = f->inputs();
  const ForwardContext ctx{};
  Tensor med = medication_projection(m, in, ctx);
  PatientRecord p = f->dataset.patients[1];
  const auto before = visit_scores(m, in, p, 1, med, ctx).to_vector();
  const auto prev0 = visit_scores(m, in, p, 0, med, ctx).to_vector();
  p.visits[1].of(CodeKind::medication) = {0, 2, 3};
  EXPECT_EQ(visit_scores(m, in, p, 1, med, ctx).to_vector(), before);
  // ...while the earlier prescription does reach the later visit.
  ASSERT_NE(p.visits[0].med(), (IndexSet{1, 4}));
  p.visits[0].of(CodeKind::medication) = {1, 4};  // text already in the table
  EXPECT_NE(visit_scores(m, in, p, 1, med, ctx).to_vector(), before);
  EXPECT_EQ(visit_scores(m, in, p, 0, med, ctx).to_vector(), prev0);
}

TEST(Model, LabelsAreMultiHot) {
  auto f = micro_fixture(16);
  Tensor y = patient_labels(f->dataset.patients[1], 5);
  EXPECT_EQ(y.row_values(1), (std::vector<double>{0, 1, 0, 0, 1}));
}

TEST(ModelInputs, RejectsMoleculeCountMismatch) {
  auto f = micro_fixture(16);
  auto graphs = f->graphs;
  graphs.pop_back();
  EXPECT_THROW(ModelInputs(f->dataset, f->table, graphs), ValidationError);
}

}  // namespace
}  // namespace nlammr
