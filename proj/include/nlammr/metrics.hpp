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

// Set-prediction metrics over medication indices. Sets are passed as sorted,
// duplicate-free index vectors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <vector>

#include "nlammr/alignment.hpp"
#include "nlammr/ehr.hpp"

namespace nlammr {

using IndexSet = std::vector<std::size_t>;

inline std::size_t intersection_size(const IndexSet& a, const IndexSet& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

// |pred & truth| / |pred | truth|; two empty sets agree perfectly.
inline double jaccard(const IndexSet& pred, const IndexSet& truth) {
  const std::size_t inter = intersection_size(pred, truth);
  const std::size_t uni = pred.size() + truth.size() - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Harmonic mean of precision and recall. An undefined precision or recall
// counts as 0; two empty sets score 1.
inline double f1(const IndexSet& pred, const IndexSet& truth) {
  if (pred.empty() && truth.empty()) return 1.0;
  const std::size_t inter = intersection_size(pred, truth);
  const double p = pred.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(pred.size());
  const double r = truth.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(truth.size());
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

// Average precision of `scores` against multi-hot `truth`: ranks by score
// descending (ties by index ascending) and averages the precision at each
// positive. nullopt when truth has no positives.
inline std::optional<double> prauc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  std::size_t positives = 0;
  for (auto t : truth) positives += t ? 1 : 0;
  if (positives == 0) return std::nullopt;
  const auto order = rank_medications(scores);
  double acc = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (truth[order[r]]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return acc / static_cast<double>(positives);
}

// Fraction of interacting unordered pairs in one prescription; nullopt when
// it holds fewer than two medications.
inline std::optional<double> visit_ddi_rate(const IndexSet& pred, const DdiSet& ddi) {
  if (pred.size() < 2) return std::nullopt;
  std::size_t bad = 0, all = 0;
  for (std::size_t a = 0; a < pred.size(); ++a)
    for (std::size_t b = a + 1; b < pred.size(); ++b) {
      ++all;
      if (ddi.count(ordered_pair(pred[a], pred[b]))) ++bad;
    }
  return static_cast<double>(bad) / static_cast<double>(all);
}

// Mean per-visit interaction rate over visits with at least two
// medications; 0 when there are none.
inline double ddi_rate(const std::vector<IndexSet>& preds, const DdiSet& ddi) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& p : preds) {
    if (auto r = visit_ddi_rate(p, ddi)) {
      acc += *r;
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

struct VisitMetrics {
  double jaccard = 0.0;
  double f1 = 0.0;
  std::optional<double> prauc;
};

inline VisitMetrics visit_metrics(std::span<const double> scores, const IndexSet& pred, const IndexSet& truth) {
  VisitMetrics m;
  m.jaccard = jaccard(pred, truth);
  m.f1 = f1(pred, truth);
  m.prauc = prauc(scores, multihot(truth, scores.size()));
  return m;
}

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // across bootstrap rounds; 0 without bootstrap
};

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace nlammr
