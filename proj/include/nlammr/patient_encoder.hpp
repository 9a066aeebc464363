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

// Patient tower: cross-attention fusion of the per-visit text embeddings and
// attention over the prescriptions of earlier visits.

#include <cmath>
#include <string>
#include <vector>

#include "nlammr/ehr.hpp"
#include "nlammr/embedding.hpp"
#include "nlammr/nn.hpp"
#include "nlammr/tensor.hpp"

namespace nlammr {

// Text weights W_1, W_2 (d_enc x d_k) score the three component texts against
// the fused text; W_r (2 d_enc x d_enc), b_r mix the attended and fused texts.
struct FusionParams {
  Tensor w1;
  Tensor w2;
  Tensor wr;
  Tensor br;

  std::size_t d_k() const { return w1.cols(); }

  static FusionParams init(std::size_t d_enc, std::size_t d_k, Rng& rng) {
    FusionParams p;
    p.w1 = glorot(d_enc, d_k, rng);
    p.w2 = glorot(d_enc, d_k, rng);
    p.wr = glorot(2 * d_enc, d_enc, rng);
    p.br = Tensor::vector(std::vector<double>(d_enc, 0.0), true);
    return p;
  }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".w1", w1});
    out.push_back({prefix + ".w2", w2});
    out.push_back({prefix + ".wr", wr});
    out.push_back({prefix + ".br", br});
  }
};

// W_3, W_4 (d_enc x d_k) score past prescriptions against the current
// patient vector; W_m (d_enc x d_k), b_m (d_k) project the pooled history.
struct HistoryParams {
  Tensor w3;
  Tensor w4;
  Tensor wm;
  Tensor bm;

  std::size_t d_k() const { return w3.cols(); }

  static HistoryParams init(std::size_t d_enc, std::size_t d_k, Rng& rng) {
    HistoryParams p;
    p.w3 = glorot(d_enc, d_k, rng);
    p.w4 = glorot(d_enc, d_k, rng);
    p.wm = glorot(d_enc, d_k, rng);
    p.bm = Tensor::vector(std::vector<double>(d_k, 0.0), true);
    return p;
  }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".w3", w3});
    out.push_back({prefix + ".w4", w4});
    out.push_back({prefix + ".wm", wm});
    out.push_back({prefix + ".bm", bm});
  }
};

// Constant (1 x d_enc) row holding the stored embedding of `key`.
inline Tensor embedding_row(const EmbeddingTable& table, const std::string& key) {
  auto v = table.lookup(key);
  return Tensor::row({v.begin(), v.end()});
}

struct VisitTexts {
  std::string fused;  // r_dps
  std::string diag;
  std::string proc;
  std::string symp;
};

inline VisitTexts visit_texts(const Visit& v, const Dataset& ds) {
  return {fused_visit_text(v, ds), visit_text(v, ds, CodeKind::diagnosis),
          visit_text(v, ds, CodeKind::procedure), visit_text(v, ds, CodeKind::symptom)};
}

struct VisitEmbeddings {
  Tensor fused;
  Tensor diag;
  Tensor proc;
  Tensor symp;
};

inline VisitEmbeddings encode_visit_texts(const VisitTexts& texts, const EmbeddingTable& table) {
  return {embedding_row(table, texts.fused), embedding_row(table, texts.diag),
          embedding_row(table, texts.proc), embedding_row(table, texts.symp)};
}

inline VisitEmbeddings encode_visit_texts(const Visit& v, const Dataset& ds, const EmbeddingTable& table) {
  return encode_visit_texts(visit_texts(v, ds), table);
}

struct AttentionResult {
  Tensor value;    // attended vector, one row
  Tensor weights;  // one row of softmax weights
};

// Scaled dot-product attention of one query row over the rows of `keys`,
// with separate key/query projections:
//   w = softmax((keys Wk)(query Wq)^T / sqrt(d_k)),  value = w keys
inline AttentionResult attend(const Tensor& keys, const Tensor& query, const Tensor& wk, const Tensor& wq) {
  Tensor logits = transpose(matmul(matmul(keys, wk), transpose(matmul(query, wq))));  // 1 x rows
  Tensor w = softmax_scaled(logits, wk.cols());
  return {matmul(w, keys), w};
}

// h_attn = sum_c w_c h_c over c in {diagnosis, procedure, symptom}.
inline AttentionResult cross_attention_fuse(const VisitEmbeddings& e, const FusionParams& params) {
  Tensor stacked = stack_rows({e.diag, e.proc, e.symp});
  return attend(stacked, e.fused, params.w1, params.w2);
}

// p = [h_attn | h_dps] W_r + b_r.
inline Tensor fuse_patient(const Tensor& h_attn, const Tensor& h_fused, const FusionParams& params) {
  return add_bias(matmul(concat_cols(h_attn, h_fused), params.wr), params.br);
}

struct HistoryResult {
  Tensor value;    // (1 x d_k)
  Tensor weights;  // undefined when there is no history
};

// Attention-pooled prescriptions of earlier visits, projected to d_k.
// An empty history yields the zero vector.
inline HistoryResult history_representation(const std::vector<std::string>& past_med_texts,
                                            const Tensor& patient, const EmbeddingTable& table,
                                            const HistoryParams& params) {
  if (past_med_texts.empty()) {
    return {Tensor::zeros({1, params.d_k()}), {}};
  }
  std::vector<Tensor> rows;
  rows.reserve(past_med_texts.size());
  for (const auto& t : past_med_texts) rows.push_back(embedding_row(table, t));
  Tensor stacked = stack_rows(rows);
  AttentionResult pooled = attend(stacked, patient, params.w3, params.w4);
  return {add_bias(matmul(pooled.value, params.wm), params.bm), pooled.weights};
}

}  // namespace nlammr
