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

// Model inference over a set of patients and the aggregated evaluation
// report (per-visit means, optional bootstrap deviations, interaction rates).

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlammr/metrics.hpp"
#include "nlammr/model.hpp"

namespace nlammr {

struct PredictionRecord {
  std::size_t patient = 0;  // index into the dataset
  std::string patient_id;
  std::size_t visit_idx = 0;
  std::vector<double> scores;
  IndexSet predicted;
  IndexSet truth;
};

inline void check_compatible(const Model& model, const ModelInputs& in) {
  if (model.config.d_enc != in.table().dim()) {
    throw ValidationError("model expects " + std::to_string(model.config.d_enc) +
                          "-dim text embeddings, table has " + std::to_string(in.table().dim()));
  }
  if (model.cards != FeatureCardinalities{} && !in.graphs().empty()) {
    for (const auto& g : in.graphs()) g.validate(model.cards);
  }
}

// Eval-mode scores and threshold predictions for every visit of the given
// patients, in patient then visit order.
inline std::vector<PredictionRecord> predict_patients(const Model& model, const ModelInputs& in,
                                                      const std::vector<std::size_t>& patients,
                                                      const PredictionConfig& cfg) {
  cfg.validate();
  check_compatible(model, in);
  NoGradGuard no_grad;
  const ForwardContext ctx{};
  const Tensor med_proj = medication_projection(model, in, ctx);
  std::vector<PredictionRecord> out;
  for (auto pi : patients) {
    const PatientRecord& p = in.dataset().patients.at(pi);
    const Tensor scores = patient_scores(model, in, p, med_proj, ctx);
    for (std::size_t t = 0; t < p.visits.size(); ++t) {
      PredictionRecord r;
      r.patient = pi;
      r.patient_id = p.patient_id;
      r.visit_idx = t;
      r.scores = scores.row_values(t);
      r.predicted = predict_set(r.scores, cfg);
      r.truth = p.visits[t].med();
      out.push_back(std::move(r));
    }
  }
  return out;
}

struct EvalConfig {
  PredictionConfig prediction;
  std::size_t bootstrap_rounds = 10;  // 0 disables the deviations
  std::uint64_t bootstrap_seed = 0;
};

struct EvalReport {
  std::size_t n_patients = 0;
  std::size_t n_visits = 0;
  std::size_t prauc_skipped = 0;  // visits without any positive label
  MetricSummary jaccard;
  MetricSummary f1;
  MetricSummary prauc;
  std::optional<double> ddi_rate;
  std::optional<double> truth_ddi_rate;
  std::optional<double> delta_ddi;

  bool operator==(const EvalReport& o) const {
    auto same = [](const MetricSummary& a, const MetricSummary& b) { return a.mean == b.mean && a.stddev == b.stddev; };
    return n_patients == o.n_patients && n_visits == o.n_visits && prauc_skipped == o.prauc_skipped &&
           same(jaccard, o.jaccard) && same(f1, o.f1) && same(prauc, o.prauc) && ddi_rate == o.ddi_rate &&
           truth_ddi_rate == o.truth_ddi_rate && delta_ddi == o.delta_ddi;
  }
};

namespace detail {

struct MetricMeans {
  double jaccard = 0.0, f1 = 0.0, prauc = 0.0;
  std::size_t prauc_skipped = 0;
};

inline MetricMeans means_over(const std::vector<const VisitMetrics*>& visits) {
  MetricMeans m;
  std::size_t n_pr = 0;
  for (const auto* v : visits) {
    m.jaccard += v->jaccard;
    m.f1 += v->f1;
    if (v->prauc) {
      m.prauc += *v->prauc;
      ++n_pr;
    } else {
      ++m.prauc_skipped;
    }
  }
  if (!visits.empty()) {
    m.jaccard /= static_cast<double>(visits.size());
    m.f1 /= static_cast<double>(visits.size());
  }
  if (n_pr) m.prauc /= static_cast<double>(n_pr);
  return m;
}

}  // namespace detail

// Aggregates per-visit metrics. Bootstrap rounds resample patients with
// replacement and report the standard deviation of the round means.
inline EvalReport summarize(const std::vector<PredictionRecord>& records, const std::optional<DdiSet>& ddi,
                            const EvalConfig& cfg) {
  if (records.empty()) throw ValidationError("evaluate: no visits to score");
  std::vector<VisitMetrics> per_visit;
  per_visit.reserve(records.size());
  for (const auto& r : records) per_visit.push_back(visit_metrics(r.scores, r.predicted, r.truth));

  // Group visits by patient, preserving first-seen order.
  std::vector<std::vector<std::size_t>> groups;
  {
    std::map<std::size_t, std::size_t> group_index;  // patient -> group
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto [it, fresh] = group_index.emplace(records[i].patient, groups.size());
      if (fresh) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  }

  std::vector<const VisitMetrics*> all;
  for (const auto& v : per_visit) all.push_back(&v);
  const auto full = detail::means_over(all);

  EvalReport rep;
  rep.n_patients = groups.size();
  rep.n_visits = records.size();
  rep.prauc_skipped = full.prauc_skipped;
  rep.jaccard.mean = full.jaccard;
  rep.f1.mean = full.f1;
  rep.prauc.mean = full.prauc;

  if (cfg.bootstrap_rounds > 0) {
    Rng rng(derive_seed(cfg.bootstrap_seed, "bootstrap"));
    std::vector<double> js, fs, ps;
    for (std::size_t round = 0; round < cfg.bootstrap_rounds; ++round) {
      std::vector<const VisitMetrics*> sample;
      for (std::size_t k = 0; k < groups.size(); ++k) {
        for (auto i : groups[rng.below(groups.size())]) sample.push_back(&per_visit[i]);
      }
      const auto m = detail::means_over(sample);
      js.push_back(m.jaccard);
      fs.push_back(m.f1);
      ps.push_back(m.prauc);
    }
    rep.jaccard.stddev = sample_stddev(js);
    rep.f1.stddev = sample_stddev(fs);
    rep.prauc.stddev = sample_stddev(ps);
  }

  if (ddi) {
    std::vector<IndexSet> preds, truths;
    for (const auto& r : records) {
      preds.push_back(r.predicted);
      truths.push_back(r.truth);
    }
    rep.ddi_rate = ddi_rate(preds, *ddi);
    rep.truth_ddi_rate = ddi_rate(truths, *ddi);
    rep.delta_ddi = *rep.ddi_rate - *rep.truth_ddi_rate;
  }
  return rep;
}

inline EvalReport evaluate(const Model& model, const ModelInputs& in, const std::vector<std::size_t>& patients,
                           const EvalConfig& cfg) {
  if (patients.empty()) throw ValidationError("evaluate: empty split");
  return summarize(predict_patients(model, in, patients, cfg.prediction), in.dataset().ddi, cfg);
}

inline ojson report_to_json(const EvalReport& r) {
  auto metric = [](const MetricSummary& m) {
    ojson j;
    j["mean"] = m.mean;
    j["std"] = m.stddev;
    return j;
  };
  ojson j;
  j["n_patients"] = r.n_patients;
  j["n_visits"] = r.n_visits;
  j["prauc_skipped_visits"] = r.prauc_skipped;
  j["jaccard"] = metric(r.jaccard);
  j["f1"] = metric(r.f1);
  j["prauc"] = metric(r.prauc);
  if (r.ddi_rate) {
    j["ddi_rate"] = *r.ddi_rate;
    j["truth_ddi_rate"] = *r.truth_ddi_rate;
    j["delta_ddi"] = *r.delta_ddi;
  }
  return j;
}

inline ojson prediction_to_json(const PredictionRecord& r, const Vocabulary& meds) {
  ojson j;
  j["patient_id"] = r.patient_id;
  j["visit_idx"] = r.visit_idx;
  j["scores"] = r.scores;
  j["predicted"] = ojson::array();
  for (auto i : r.predicted) j["predicted"].push_back(meds.code(i));
  j["truth"] = ojson::array();
  for (auto i : r.truth) j["truth"].push_back(meds.code(i));
  return j;
}

}  // namespace nlammr
