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

// Joint-space projection of patients and medications, inner-product scoring
// and threshold selection.

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nlammr/errors.hpp"
#include "nlammr/nn.hpp"
#include "nlammr/tensor.hpp"

namespace nlammr {

struct ProjectionParams {
  Mlp2 patient;     // d_enc -> hidden -> d_k
  Mlp2 medication;  // (d_s + d_enc) -> hidden -> d_k

  static ProjectionParams init(std::size_t patient_in, std::size_t med_in, std::size_t hidden,
                               std::size_t d_k, Rng& rng) {
    Mlp2 p = Mlp2::init(patient_in, hidden, d_k, rng);
    Mlp2 m = Mlp2::init(med_in, hidden, d_k, rng);
    return {std::move(p), std::move(m)};
  }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    patient.collect(prefix + ".patient", out);
    medication.collect(prefix + ".medication", out);
  }
};

struct PredictionConfig {
  double delta = 0.5;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("prediction threshold must lie in (0, 1)");
  }
};

// E_m = [E_s | E_f], structure columns first.
inline Tensor build_medication_matrix(const Tensor& structure, const Tensor& text) {
  if (structure.rows() != text.rows()) {
    throw ShapeError("medication matrix: " + std::to_string(structure.rows()) + " structure rows vs " +
                     std::to_string(text.rows()) + " text rows");
  }
  return concat_cols(structure, text);
}

// sigmoid(<p, row_i>) for every medication row: (1 x d_k) x (|M| x d_k) -> (1 x |M|).
inline Tensor score(const Tensor& patient_feature, const Tensor& med_proj) {
  if (patient_feature.numel() != med_proj.cols()) {
    throw ShapeError("score: patient feature " + shape_str(patient_feature.shape()) +
                     " vs medication matrix " + shape_str(med_proj.shape()));
  }
  return sigmoid(matmul(patient_feature, transpose(med_proj)));
}

// { i : scores[i] > delta }, ascending index order.
inline std::vector<std::size_t> predict_set(std::span<const double> scores, const PredictionConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > cfg.delta) out.push_back(i);
  return out;
}

// Medication indices by descending score, ties by ascending index.
inline std::vector<std::size_t> rank_medications(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace nlammr
