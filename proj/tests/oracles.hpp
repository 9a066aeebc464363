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

// Brute-force metric references over std::set, written without the library's
// sorted-merge or rank helpers.

#include <set>
#include <vector>

#include "nlammr/ehr.hpp"

namespace nlammr::testing {

inline double ref_jaccard(const std::set<std::size_t>& p, const std::set<std::size_t>& t) {
  std::set<std::size_t> u = p, i;
  u.insert(t.begin(), t.end());
  for (auto x : p)
    if (t.count(x)) i.insert(x);
  return u.empty() ? 1.0 : double(i.size()) / double(u.size());
}

inline double ref_f1(const std::set<std::size_t>& p, const std::set<std::size_t>& t) {
  if (p.empty() && t.empty()) return 1.0;
  double tp = 0;
  for (auto x : p) tp += t.count(x);
  double prec = p.empty() ? 0 : tp / p.size(), rec = t.empty() ? 0 : tp / t.size();
  return prec + rec == 0 ? 0 : 2 * prec * rec / (prec + rec);
}

// AP via the precision at each positive's rank, rank computed by counting.
inline double ref_ap(const std::vector<double>& s, const std::set<std::size_t>& t) {
  auto rank = [&](std::size_t i) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++r;
    return r;
  };
  double acc = 0;
  for (auto i : t) {
    std::size_t above = 0;
    for (auto k : t)
      if (rank(k) <= rank(i)) ++above;
    acc += double(above) / double(rank(i));
  }
  return acc / t.size();
}

inline double ref_ddi(const std::vector<std::set<std::size_t>>& preds, const DdiSet& ddi) {
  double acc = 0;
  int n = 0;
  for (const auto& p : preds) {
    std::vector<std::size_t> v(p.begin(), p.end());
    int pairs = 0, bad = 0;
    for (auto a : v)
      for (auto b : v)
        if (a < b) {
          ++pairs;
          bad += ddi.count({a, b}) ? 1 : 0;
        }
    if (pairs) {
      acc += double(bad) / pairs;
      ++n;
    }
  }
  return n ? acc / n : 0.0;
}

}  // namespace nlammr::testing
