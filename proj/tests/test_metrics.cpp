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

#include <algorithm>
#include <cmath>
#include <set>

#include "nlammr/evaluate.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace nlammr {
namespace {

using testing::ref_ap;
using testing::ref_ddi;
using testing::ref_f1;
using testing::ref_jaccard;

IndexSet iv(std::initializer_list<std::size_t> x) { return IndexSet(x); }

TEST(Jaccard, Examples) {
  EXPECT_DOUBLE_EQ(jaccard(iv({0, 1}), iv({1, 2})), 1.0 / 3.0);
  EXPECT_EQ(jaccard(iv({3, 4}), iv({3, 4})), 1.0);
  EXPECT_EQ(jaccard(iv({}), iv({0})), 0.0);
  EXPECT_EQ(jaccard(iv({}), iv({})), 1.0);
}

TEST(F1, Examples) {
  EXPECT_DOUBLE_EQ(f1(iv({0, 1}), iv({1, 2})), 0.5);
  EXPECT_EQ(f1(iv({}), iv({2})), 0.0);
  EXPECT_EQ(f1(iv({2}), iv({})), 0.0);
  EXPECT_EQ(f1(iv({1, 2}), iv({1, 2})), 1.0);
  EXPECT_EQ(f1(iv({}), iv({})), 1.0);
}

TEST(Prauc, Examples) {
  const std::vector<std::uint8_t> t10{1, 0};
  EXPECT_EQ(prauc(std::vector<double>{0.9, 0.1}, t10), 1.0);
  EXPECT_EQ(prauc(std::vector<double>{0.1, 0.9}, t10), 0.5);
  EXPECT_EQ(prauc(std::vector<double>{0.3, 0.9, 0.1}, std::vector<std::uint8_t>{1, 1, 1}), 1.0);
  EXPECT_FALSE(prauc(std::vector<double>{0.3, 0.9}, std::vector<std::uint8_t>{0, 0}).has_value());
}

TEST(Prauc, TiesBreakByIndex) {
  // Equal scores: index 0 ranks first.
  EXPECT_EQ(prauc(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{1, 0}), 1.0);
  EXPECT_EQ(prauc(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{0, 1}), 0.5);
}

TEST(DdiRate, Examples) {
  const DdiSet ddi{{0, 1}};
  EXPECT_DOUBLE_EQ(ddi_rate({iv({0, 1, 2})}, ddi), 1.0 / 3.0);
  EXPECT_EQ(ddi_rate({iv({1, 2})}, ddi), 0.0);
  EXPECT_EQ(ddi_rate({iv({0}), iv({})}, ddi), 0.0);
  // Single-medication visits are left out of the mean.
  EXPECT_DOUBLE_EQ(ddi_rate({iv({0, 1}), iv({0}), iv({1, 2})}, ddi), 0.5);
}

TEST(Metrics, RandomVisitsMatchBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(15);
    std::vector<double> s(n);
    std::set<std::size_t> ps, ts;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.uniform() * 8) / 8;  // coarse grid forces ties
      if (rng.uniform() < 0.4) ps.insert(i);
      if (rng.uniform() < 0.4) ts.insert(i);
    }
    IndexSet p(ps.begin(), ps.end()), t(ts.begin(), ts.end());
    const double j = jaccard(p, t), f = f1(p, t);
    EXPECT_NEAR(j, ref_jaccard(ps, ts), 1e-15);
    EXPECT_NEAR(f, ref_f1(ps, ts), 1e-12);
    EXPECT_NEAR(f, 2 * j / (1 + j), 1e-12);
    EXPECT_LE(j, f + 1e-15);
    auto ap = prauc(s, multihot(t, n));
    ASSERT_EQ(ap.has_value(), !ts.empty());
    if (ap) {
      EXPECT_NEAR(*ap, ref_ap(s, ts), 1e-12);
      EXPECT_GE(*ap, 0.0);
      EXPECT_LE(*ap, 1.0);
    }
  }
}

TEST(Metrics, RandomDdiMatchesBruteForce) {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    DdiSet ddi;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (rng.uniform() < 0.3) ddi.insert({a, b});
    std::vector<std::set<std::size_t>> sets;
    std::vector<IndexSet> preds;
    for (int v = 0; v < 5; ++v) {
      std::set<std::size_t> p;
      for (std::size_t i = 0; i < n; ++i)
        if (rng.uniform() < 0.5) p.insert(i);
      sets.push_back(p);
      preds.emplace_back(p.begin(), p.end());
    }
    EXPECT_NEAR(ddi_rate(preds, ddi), ref_ddi(sets, ddi), 1e-12);
  }
}

PredictionRecord record(std::size_t patient, std::vector<double> scores, IndexSet truth, double delta = 0.5) {
  PredictionRecord r;
  r.patient = patient;
  r.patient_id = "p" + std::to_string(patient);
  r.scores = std::move(scores);
  r.predicted = predict_set(r.scores, {delta});
  r.truth = std::move(truth);
  return r;
}

TEST(Summarize, DeltaDdiOnHandFixture) {
  // Medications a=0, b=1, c=2; only (a, b) interacts.
  const DdiSet ddi{{0, 1}};
  std::vector<PredictionRecord> recs{
      record(0, {0.9, 0.8, 0.7}, iv({0, 2})),  // predicted {a,b,c}: 1/3; truth {a,c}: 0
      record(0, {0.9, 0.8, 0.1}, iv({0, 1})),  // predicted {a,b}: 1;    truth {a,b}: 1
      record(1, {0.1, 0.8, 0.7}, iv({1})),     // predicted {b,c}: 0;    truth single: skipped
  };
  EvalReport r = summarize(recs, ddi, EvalConfig{{0.5}, 0, 0});
  EXPECT_DOUBLE_EQ(*r.ddi_rate, (1.0 / 3.0 + 1.0 + 0.0) / 3.0);
  EXPECT_DOUBLE_EQ(*r.truth_ddi_rate, 0.5);
  EXPECT_DOUBLE_EQ(*r.delta_ddi, 4.0 / 9.0 - 0.5);
  EXPECT_FALSE(summarize(recs, std::nullopt, EvalConfig{{0.5}, 0, 0}).ddi_rate.has_value());
}

TEST(Summarize, EqualsPerVisitOracleMean) {
  std::vector<PredictionRecord> recs{
      record(0, {0.9, 0.2, 0.6, 0.1}, iv({0, 2})), record(0, {0.4, 0.7, 0.6, 0.1}, iv({0, 1})),
      record(1, {0.3, 0.2, 0.1, 0.05}, iv({3})),   record(2, {0.6, 0.6, 0.6, 0.6}, iv({})),
      record(2, {0.1, 0.9, 0.95, 0.2}, iv({1, 2, 3})),
  };
  double j = 0, f = 0, ap = 0;
  int n_ap = 0;
  for (const auto& r : recs) {
    std::set<std::size_t> p(r.predicted.begin(), r.predicted.end()), t(r.truth.begin(), r.truth.end());
    j += ref_jaccard(p, t);
    f += ref_f1(p, t);
    if (!t.empty()) {
      ap += ref_ap(r.scores, t);
      ++n_ap;
    }
  }
  EvalReport rep = summarize(recs, std::nullopt, EvalConfig{{0.5}, 10, 3});
  EXPECT_EQ(rep.n_patients, 3u);
  EXPECT_EQ(rep.n_visits, 5u);
  EXPECT_EQ(rep.prauc_skipped, 1u);
  EXPECT_NEAR(rep.jaccard.mean, j / 5, 1e-12);
  EXPECT_NEAR(rep.f1.mean, f / 5, 1e-12);
  EXPECT_NEAR(rep.prauc.mean, ap / n_ap, 1e-12);
  EXPECT_GT(rep.jaccard.stddev, 0.0);
  EXPECT_EQ(summarize(recs, std::nullopt, EvalConfig{{0.5}, 10, 3}), rep);
  EXPECT_EQ(summarize(recs, std::nullopt, EvalConfig{{0.5}, 0, 3}).jaccard.stddev, 0.0);
}

TEST(Summarize, PerfectAndConstantPredictors) {
  std::vector<PredictionRecord> perfect{record(0, {0.9, 0.1}, iv({0})), record(1, {0.2, 0.8}, iv({1}))};
  EvalReport p = summarize(perfect, std::nullopt, EvalConfig{{0.5}, 5, 0});
  EXPECT_EQ(p.jaccard.mean, 1.0);
  EXPECT_EQ(p.f1.mean, 1.0);
  EXPECT_EQ(p.jaccard.stddev, 0.0);
  std::vector<PredictionRecord> flat{record(0, {0.5, 0.5}, iv({0})), record(1, {0.5, 0.5}, iv({1}))};
  EXPECT_EQ(summarize(flat, std::nullopt, EvalConfig{{0.5}, 0, 0}).jaccard.mean, 0.0);
  EXPECT_THROW(summarize({}, std::nullopt, EvalConfig{}), ValidationError);
}

TEST(Evaluate, EmptySplitRejected) {
  auto f = testing::micro_fixture(16);
  Model m = Model::init(testing::small_model_config(), f->molecules.cards);
  EXPECT_THROW(evaluate(m, f->inputs(), {}, EvalConfig{}), ValidationError);
}

TEST(Evaluate, MatchesPredictionsAndReportKeys) {
  auto f = testing::micro_fixture(16);
  Model m = Model::init(testing::small_model_config(), f->molecules.cards);
  ModelInputs in = f->inputs();
  auto recs = predict_patients(m, in, {0, 1}, PredictionConfig{});
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[2].patient_id, f->dataset.patients[1].patient_id);
  EXPECT_EQ(recs[2].visit_idx, 1u);
  EXPECT_EQ(recs[2].truth, iv({1, 4}));
  EvalReport rep = evaluate(m, in, {0, 1}, EvalConfig{});
  EXPECT_EQ(rep, summarize(recs, f->dataset.ddi, EvalConfig{}));
  ojson j = report_to_json(rep);
  for (const char* k : {"n_patients", "n_visits", "prauc_skipped_visits", "jaccard", "f1", "prauc"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j.contains("ddi_rate"), f->dataset.ddi.has_value());
  ojson pj = prediction_to_json(recs[2], f->dataset.meds());
  EXPECT_EQ(pj["truth"], (ojson{f->dataset.meds().code(1), f->dataset.meds().code(4)}));
}

}  // namespace
}  // namespace nlammr
