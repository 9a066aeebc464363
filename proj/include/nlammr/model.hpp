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

// The full two-tower recommender: parameters, inputs, and the forward pass
// from a patient record to per-visit medication scores.

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nlammr/alignment.hpp"
#include "nlammr/ehr.hpp"
#include "nlammr/embedding.hpp"
#include "nlammr/molgraph.hpp"
#include "nlammr/nn.hpp"
#include "nlammr/patient_encoder.hpp"
#include "nlammr/tensor.hpp"

namespace nlammr {

struct ModelConfig {
  std::size_t d_enc = 768;
  std::size_t d_s = 64;
  std::size_t d_k = 256;
  std::size_t hidden = 256;
  std::size_t gin_layers = 4;
  double dropout = 0.2;
  std::size_t history_window = 0;  // 0 keeps every earlier visit

  // Component switches for ablations.
  bool use_structure = true;        // E_s in the medication matrix
  bool use_text = true;             // E_f in the medication matrix
  bool use_cross_attention = true;  // otherwise the patient vector is the fused text embedding
  bool use_history = true;

  std::uint64_t init_seed = 0;

  void validate() const {
    if (d_enc == 0 || d_s == 0 || d_k == 0 || hidden == 0) throw ValidationError("model: dimensions must be >= 1");
    if (!use_structure && !use_text) throw ValidationError("model: medication tower needs structure or text");
    if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("model: dropout must lie in [0, 1)");
  }

  std::size_t med_input_dim() const { return (use_structure ? d_s : 0) + (use_text ? d_enc : 0); }
};

inline ojson model_config_to_json(const ModelConfig& c) {
  ojson j;
  j["d_enc"] = c.d_enc;
  j["d_s"] = c.d_s;
  j["d_k"] = c.d_k;
  j["hidden"] = c.hidden;
  j["gin_layers"] = c.gin_layers;
  j["dropout"] = c.dropout;
  j["history_window"] = c.history_window;
  j["use_structure"] = c.use_structure;
  j["use_text"] = c.use_text;
  j["use_cross_attention"] = c.use_cross_attention;
  j["use_history"] = c.use_history;
  j["init_seed"] = c.init_seed;
  return j;
}

inline void model_config_from_json(const ojson& j, ModelConfig& c) {
  c.d_enc = j.value("d_enc", c.d_enc);
  c.d_s = j.value("d_s", c.d_s);
  c.d_k = j.value("d_k", c.d_k);
  c.hidden = j.value("hidden", c.hidden);
  c.gin_layers = j.value("gin_layers", c.gin_layers);
  c.dropout = j.value("dropout", c.dropout);
  c.history_window = j.value("history_window", c.history_window);
  c.use_structure = j.value("use_structure", c.use_structure);
  c.use_text = j.value("use_text", c.use_text);
  c.use_cross_attention = j.value("use_cross_attention", c.use_cross_attention);
  c.use_history = j.value("use_history", c.use_history);
  c.init_seed = j.value("init_seed", c.init_seed);
}

// Everything the forward pass reads but never learns: the dataset
// vocabularies, the frozen text table, the molecules and the medication text
// matrix E_f.
class ModelInputs {
 public:
  ModelInputs(const Dataset& ds, const EmbeddingTable& table, std::vector<MoleculeGraph> graphs)
      : ds_(&ds), table_(&table), graphs_(std::move(graphs)) {
    const auto& meds = ds.meds();
    if (graphs_.size() != meds.size()) {
      throw ValidationError("model inputs: " + std::to_string(graphs_.size()) + " molecules for " +
                            std::to_string(meds.size()) + " medications");
    }
    std::vector<double> ef;
    ef.reserve(meds.size() * table.dim());
    for (std::size_t i = 0; i < meds.size(); ++i) {
      auto v = table.lookup(meds.text(i));
      ef.insert(ef.end(), v.begin(), v.end());
    }
    text_matrix_ = Tensor::matrix(meds.size(), table.dim(), std::move(ef));
  }

  const Dataset& dataset() const { return *ds_; }
  const EmbeddingTable& table() const { return *table_; }
  const std::vector<MoleculeGraph>& graphs() const { return graphs_; }
  const Tensor& text_matrix() const { return text_matrix_; }
  std::size_t num_meds() const { return graphs_.size(); }

 private:
  const Dataset* ds_;
  const EmbeddingTable* table_;
  std::vector<MoleculeGraph> graphs_;
  Tensor text_matrix_;
};

struct Model {
  ModelConfig config;
  FeatureCardinalities cards;
  GinParams gin;
  FusionParams fusion;
  HistoryParams history;
  ProjectionParams projection;

  static Model init(const ModelConfig& cfg, const FeatureCardinalities& cards) {
    cfg.validate();
    Rng rng(derive_seed(cfg.init_seed, "model-init"));
    Model m;
    m.config = cfg;
    m.cards = cards;
    m.gin = GinParams::init(cards, cfg.d_s, cfg.gin_layers, rng);
    m.fusion = FusionParams::init(cfg.d_enc, cfg.d_k, rng);
    m.history = HistoryParams::init(cfg.d_enc, cfg.d_k, rng);
    m.projection = ProjectionParams::init(cfg.d_enc, cfg.med_input_dim(), cfg.hidden, cfg.d_k, rng);
    return m;
  }

  // Canonical parameter manifest; checkpoints are laid out in this order.
  std::vector<NamedTensor> named_parameters() const {
    std::vector<NamedTensor> out;
    gin.collect("gin", out);
    fusion.collect("fusion", out);
    history.collect("history", out);
    projection.collect("projection", out);
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (auto& nt : named_parameters()) out.push_back(nt.tensor);
    return out;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& nt : named_parameters()) n += nt.tensor.numel();
    return n;
  }

  void zero_grad() const {
    for (auto& nt : named_parameters()) {
      Tensor t = nt.tensor;
      t.zero_grad();
    }
  }

  // Deep copy of all parameter values into `dst` (same architecture).
  void copy_values_to(Model& dst) const {
    auto src = named_parameters();
    auto out = dst.named_parameters();
    for (std::size_t k = 0; k < src.size(); ++k) {
      auto s = src[k].tensor.data();
      std::copy(s.begin(), s.end(), out[k].tensor.mutable_data().begin());
    }
  }

  Model clone() const {
    Model m = Model::init(config, cards);
    copy_values_to(m);
    return m;
  }
};

// Projected medication matrix, (|M| x d_k). Computed once per batch or
// evaluation pass and shared by every visit in it.
inline Tensor medication_projection(const Model& model, const ModelInputs& in, const ForwardContext& ctx) {
  Tensor med_matrix;
  if (model.config.use_structure) {
    Tensor structure = encode_all_medications(in.graphs(), model.gin, ctx);
    med_matrix = model.config.use_text ? build_medication_matrix(structure, in.text_matrix()) : structure;
  } else {
    med_matrix = in.text_matrix();
  }
  return model.projection.medication(med_matrix, ctx);
}

// Patient vector p for one visit (before projection).
inline Tensor patient_vector(const Model& model, const VisitEmbeddings& e) {
  if (!model.config.use_cross_attention) return e.fused;
  AttentionResult attn = cross_attention_fuse(e, model.fusion);
  return fuse_patient(attn.value, e.fused, model.fusion);
}

// Prescription texts of visits strictly before `t`, oldest first, capped to
// the configured window.
inline std::vector<std::string> past_medication_texts(const PatientRecord& patient, std::size_t t,
                                                      const Dataset& ds, std::size_t window) {
  std::size_t first = 0;
  if (window > 0 && t > window) first = t - window;
  std::vector<std::string> out;
  for (std::size_t i = first; i < t; ++i) out.push_back(visit_text(patient.visits[i], ds, CodeKind::medication));
  return out;
}

// Score row for visit t of `patient`, (1 x |M|).
inline Tensor visit_scores(const Model& model, const ModelInputs& in, const PatientRecord& patient, std::size_t t,
                           const Tensor& med_proj, const ForwardContext& ctx) {
  const Visit& v = patient.visits.at(t);
  VisitEmbeddings e = encode_visit_texts(v, in.dataset(), in.table());
  Tensor p = patient_vector(model, e);
  Tensor feature = model.projection.patient(p, ctx);
  if (model.config.use_history) {
    auto past = past_medication_texts(patient, t, in.dataset(), model.config.history_window);
    HistoryResult h = history_representation(past, p, in.table(), model.history);
    feature = add(feature, h.value);
  }
  return score(feature, med_proj);
}

// Scores for every visit, (T x |M|).
inline Tensor patient_scores(const Model& model, const ModelInputs& in, const PatientRecord& patient,
                             const Tensor& med_proj, const ForwardContext& ctx) {
  std::vector<Tensor> rows;
  rows.reserve(patient.visits.size());
  for (std::size_t t = 0; t < patient.visits.size(); ++t)
    rows.push_back(visit_scores(model, in, patient, t, med_proj, ctx));
  return stack_rows(rows);
}

// Multi-hot prescription labels, (T x |M|).
inline Tensor patient_labels(const PatientRecord& patient, std::size_t n_meds) {
  std::vector<double> y(patient.visits.size() * n_meds, 0.0);
  for (std::size_t t = 0; t < patient.visits.size(); ++t)
    for (auto m : patient.visits[t].med()) y[t * n_meds + m] = 1.0;
  return Tensor::matrix(patient.visits.size(), n_meds, std::move(y));
}

}  // namespace nlammr
