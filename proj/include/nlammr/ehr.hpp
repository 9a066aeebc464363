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

// Patients, visits and code vocabularies, plus the JSONL formats they are
// read from and written to.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nlammr/errors.hpp"
#include "nlammr/rng.hpp"

namespace nlammr {

using ojson = nlohmann::ordered_json;

enum class CodeKind : std::size_t { diagnosis = 0, procedure = 1, symptom = 2, medication = 3 };

inline constexpr std::array<CodeKind, 4> kAllKinds = {CodeKind::diagnosis, CodeKind::procedure,
                                                      CodeKind::symptom, CodeKind::medication};

inline const char* kind_name(CodeKind k) {
  switch (k) {
    case CodeKind::diagnosis: return "diagnosis";
    case CodeKind::procedure: return "procedure";
    case CodeKind::symptom: return "symptom";
    case CodeKind::medication: return "medication";
  }
  return "?";
}

// Field name of a code kind inside an EHR visit object.
inline const char* kind_field(CodeKind k) {
  switch (k) {
    case CodeKind::diagnosis: return "diag";
    case CodeKind::procedure: return "proc";
    case CodeKind::symptom: return "symp";
    case CodeKind::medication: return "med";
  }
  return "?";
}

inline std::size_t kind_index(CodeKind k) { return static_cast<std::size_t>(k); }

class Vocabulary {
 public:
  struct Entry {
    std::string code;
    std::string text;
  };

  Vocabulary() = default;
  explicit Vocabulary(CodeKind kind) : kind_(kind) {}

  void add(std::string code, std::string text) {
    if (code.empty()) throw ValidationError(std::string(kind_name(kind_)) + " vocabulary: empty code");
    if (text.empty()) {
      throw ValidationError(std::string(kind_name(kind_)) + " vocabulary: code \"" + code +
                            "\" has an empty description");
    }
    if (index_.count(code)) {
      throw ValidationError(std::string(kind_name(kind_)) + " vocabulary: duplicate code \"" +
                            code + "\"");
    }
    index_.emplace(code, entries_.size());
    entries_.push_back({std::move(code), std::move(text)});
  }

  CodeKind kind() const { return kind_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Entry>& entries() const { return entries_; }
  const std::string& code(std::size_t i) const { return entries_[i].code; }
  const std::string& text(std::size_t i) const { return entries_[i].text; }

  std::optional<std::size_t> find(std::string_view code) const {
    auto it = index_.find(std::string(code));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(std::string_view code) const {
    auto idx = find(code);
    if (!idx) {
      throw ValidationError("unknown code \"" + std::string(code) + "\" in " + kind_name(kind_) +
                            " vocabulary");
    }
    return *idx;
  }

  // Descriptions of `indices` joined by "; " in vocabulary order. The empty
  // set maps to the empty string.
  std::string joined_text(const std::vector<std::size_t>& indices) const {
    std::vector<std::size_t> sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    std::string out;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      if (k) out += "; ";
      out += entries_.at(sorted[k]).text;
    }
    return out;
  }

 private:
  CodeKind kind_ = CodeKind::diagnosis;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One encounter. Codes are stored as sorted, duplicate-free vocabulary
// indices per kind.
struct Visit {
  std::array<std::vector<std::size_t>, 4> codes;

  const std::vector<std::size_t>& of(CodeKind k) const { return codes[kind_index(k)]; }
  std::vector<std::size_t>& of(CodeKind k) { return codes[kind_index(k)]; }
  const std::vector<std::size_t>& diag() const { return of(CodeKind::diagnosis); }
  const std::vector<std::size_t>& proc() const { return of(CodeKind::procedure); }
  const std::vector<std::size_t>& symp() const { return of(CodeKind::symptom); }
  const std::vector<std::size_t>& med() const { return of(CodeKind::medication); }

  bool operator==(const Visit&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  std::vector<Visit> visits;

  bool operator==(const PatientRecord&) const = default;
};

// Unordered medication pairs, stored with first < second.
using DdiSet = std::set<std::pair<std::size_t, std::size_t>>;

inline std::pair<std::size_t, std::size_t> ordered_pair(std::size_t a, std::size_t b) {
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

struct Dataset {
  std::array<Vocabulary, 4> vocabs{Vocabulary(CodeKind::diagnosis), Vocabulary(CodeKind::procedure),
                                   Vocabulary(CodeKind::symptom), Vocabulary(CodeKind::medication)};
  std::vector<PatientRecord> patients;
  std::optional<DdiSet> ddi;

  const Vocabulary& vocab(CodeKind k) const { return vocabs[kind_index(k)]; }
  Vocabulary& vocab(CodeKind k) { return vocabs[kind_index(k)]; }
  const Vocabulary& meds() const { return vocab(CodeKind::medication); }
  std::size_t num_visits() const {
    std::size_t n = 0;
    for (const auto& p : patients) n += p.visits.size();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Multi-hot encoding

inline std::vector<std::uint8_t> multihot(const std::vector<std::size_t>& indices, std::size_t size) {
  std::vector<std::uint8_t> v(size, 0);
  for (auto i : indices) {
    if (i >= size) throw ValidationError("multihot: index " + std::to_string(i) + " out of range");
    v[i] = 1;
  }
  return v;
}

inline std::vector<std::size_t> multihot_decode(const std::vector<std::uint8_t>& bits) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out.push_back(i);
  return out;
}

// Multi-hot vector of the visit's codes of the vocabulary's kind.
inline std::vector<std::uint8_t> visit_to_multihot(const Visit& visit, const Vocabulary& vocab) {
  return multihot(visit.of(vocab.kind()), vocab.size());
}

// Same, starting from raw code strings.
inline std::vector<std::uint8_t> codes_to_multihot(const std::vector<std::string>& codes,
                                                   const Vocabulary& vocab) {
  std::vector<std::size_t> idx;
  idx.reserve(codes.size());
  for (const auto& c : codes) idx.push_back(vocab.index_of(c));
  return multihot(idx, vocab.size());
}

// ---------------------------------------------------------------------------
// Visit texts

inline std::string visit_text(const Visit& v, const Dataset& ds, CodeKind k) {
  return ds.vocab(k).joined_text(v.of(k));
}

// Fused diagnosis/procedure/symptom text: the non-empty component texts
// joined by " ; ". All-empty visits give "".
inline std::string fused_visit_text(const Visit& v, const Dataset& ds) {
  std::string out;
  for (CodeKind k : {CodeKind::diagnosis, CodeKind::procedure, CodeKind::symptom}) {
    std::string t = visit_text(v, ds, k);
    if (t.empty()) continue;
    if (!out.empty()) out += " ; ";
    out += t;
  }
  return out;
}

// Every text key a model needs for this dataset: per-visit fused and
// component texts, per-visit medication texts, and medication descriptions.
inline std::vector<std::string> collect_text_keys(const Dataset& ds) {
  std::vector<std::string> keys;
  std::set<std::string> seen;
  auto push = [&](std::string s) {
    if (s.empty() || seen.count(s)) return;
    seen.insert(s);
    keys.push_back(std::move(s));
  };
  for (const auto& p : ds.patients) {
    for (const auto& v : p.visits) {
      push(fused_visit_text(v, ds));
      for (CodeKind k : kAllKinds) push(visit_text(v, ds, k));
    }
  }
  for (std::size_t i = 0; i < ds.meds().size(); ++i) push(ds.meds().text(i));
  return keys;
}

// ---------------------------------------------------------------------------
// File I/O

namespace detail {

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open \"" + path + "\" for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open \"" + path + "\" for writing");
  return out;
}

// Calls fn(json, line_number) for every non-blank line.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    try {
      fn(j, lineno);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad record: " + e.what());
    }
  }
}

inline std::string at_line(const std::string& path, std::size_t lineno) {
  return path + ":" + std::to_string(lineno) + ": ";
}

}  // namespace detail

inline Vocabulary parse_vocabulary_jsonl(const std::string& path, CodeKind kind) {
  Vocabulary vocab(kind);
  detail::for_each_jsonl(path, [&](const ojson& j, std::size_t lineno) {
    try {
      vocab.add(j.at("code").get<std::string>(), j.at("text").get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError(detail::at_line(path, lineno) + e.what());
    }
  });
  return vocab;
}

inline void write_vocabulary_jsonl(const std::string& path, const Vocabulary& vocab) {
  auto out = detail::open_out(path);
  for (const auto& e : vocab.entries()) {
    ojson j;
    j["code"] = e.code;
    j["text"] = e.text;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

struct EhrParseOptions {
  // Training and evaluation data must carry a prescription on every visit.
  bool require_medications = true;
};

inline Visit parse_visit(const ojson& jv, const std::array<Vocabulary, 4>& vocabs) {
  Visit v;
  for (CodeKind k : kAllKinds) {
    const char* field = kind_field(k);
    if (!jv.contains(field)) continue;
    const auto& vocab = vocabs[kind_index(k)];
    auto& idx = v.of(k);
    for (const auto& c : jv.at(field)) {
      const std::string code = c.get<std::string>();
      idx.push_back(vocab.index_of(code));
    }
    std::sort(idx.begin(), idx.end());
    if (std::adjacent_find(idx.begin(), idx.end()) != idx.end()) {
      throw ValidationError(std::string("duplicate code in ") + field + " list");
    }
  }
  return v;
}

inline std::vector<PatientRecord> parse_ehr_jsonl(const std::string& path,
                                                  const std::array<Vocabulary, 4>& vocabs,
                                                  EhrParseOptions opts = {}) {
  std::vector<PatientRecord> patients;
  detail::for_each_jsonl(path, [&](const ojson& j, std::size_t lineno) {
    PatientRecord rec;
    rec.patient_id = j.at("patient_id").get<std::string>();
    const auto& visits = j.at("visits");
    if (!visits.is_array() || visits.empty()) {
      throw ValidationError(detail::at_line(path, lineno) + "patient \"" + rec.patient_id +
                            "\" has no visits");
    }
    std::size_t vi = 0;
    for (const auto& jv : visits) {
      try {
        rec.visits.push_back(parse_visit(jv, vocabs));
      } catch (const ValidationError& e) {
        throw ValidationError(detail::at_line(path, lineno) + "patient \"" + rec.patient_id +
                              "\" visit " + std::to_string(vi) + ": " + e.what());
      }
      if (opts.require_medications && rec.visits.back().med().empty()) {
        throw ValidationError(detail::at_line(path, lineno) + "patient \"" + rec.patient_id +
                              "\" visit " + std::to_string(vi) + ": empty medication set");
      }
      ++vi;
    }
    patients.push_back(std::move(rec));
  });
  return patients;
}

inline ojson visit_to_json(const Visit& v, const std::array<Vocabulary, 4>& vocabs) {
  ojson jv;
  for (CodeKind k : kAllKinds) {
    ojson arr = ojson::array();
    for (auto i : v.of(k)) arr.push_back(vocabs[kind_index(k)].code(i));
    jv[kind_field(k)] = std::move(arr);
  }
  return jv;
}

inline void write_ehr_jsonl(const std::string& path, const Dataset& ds) {
  auto out = detail::open_out(path);
  for (const auto& p : ds.patients) {
    ojson j;
    j["patient_id"] = p.patient_id;
    j["visits"] = ojson::array();
    for (const auto& v : p.visits) j["visits"].push_back(visit_to_json(v, ds.vocabs));
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline DdiSet parse_ddi_jsonl(const std::string& path, const Vocabulary& meds) {
  DdiSet pairs;
  detail::for_each_jsonl(path, [&](const ojson& j, std::size_t lineno) {
    const std::string a = j.at("a").get<std::string>();
    const std::string b = j.at("b").get<std::string>();
    std::size_t ia, ib;
    try {
      ia = meds.index_of(a);
      ib = meds.index_of(b);
    } catch (const ValidationError& e) {
      throw ValidationError(detail::at_line(path, lineno) + e.what());
    }
    if (ia == ib) {
      throw ValidationError(detail::at_line(path, lineno) + "interaction of \"" + a +
                            "\" with itself");
    }
    if (!pairs.insert(ordered_pair(ia, ib)).second) {
      throw ValidationError(detail::at_line(path, lineno) + "duplicate interaction pair (\"" + a +
                            "\", \"" + b + "\")");
    }
  });
  return pairs;
}

inline void write_ddi_jsonl(const std::string& path, const DdiSet& pairs, const Vocabulary& meds) {
  auto out = detail::open_out(path);
  for (const auto& [a, b] : pairs) {
    ojson j;
    j["a"] = meds.code(a);
    j["b"] = meds.code(b);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

struct CorpusPaths {
  std::string ehr;
  std::array<std::string, 4> vocabs;
  std::string ddi;  // empty: no interaction data

  // Standard file names inside a corpus directory.
  static CorpusPaths in_dir(const std::string& dir) {
    CorpusPaths p;
    p.ehr = dir + "/ehr.jsonl";
    p.vocabs = {dir + "/vocab_diag.jsonl", dir + "/vocab_proc.jsonl", dir + "/vocab_symp.jsonl",
                dir + "/vocab_med.jsonl"};
    p.ddi = dir + "/ddi.jsonl";
    return p;
  }
};

inline std::array<Vocabulary, 4> load_vocabularies(const std::array<std::string, 4>& paths) {
  return {parse_vocabulary_jsonl(paths[0], CodeKind::diagnosis),
          parse_vocabulary_jsonl(paths[1], CodeKind::procedure),
          parse_vocabulary_jsonl(paths[2], CodeKind::symptom),
          parse_vocabulary_jsonl(paths[3], CodeKind::medication)};
}

inline Dataset load_dataset(const CorpusPaths& paths, EhrParseOptions opts = {}) {
  Dataset ds;
  ds.vocabs = load_vocabularies(paths.vocabs);
  ds.patients = parse_ehr_jsonl(paths.ehr, ds.vocabs, opts);
  if (!paths.ddi.empty()) ds.ddi = parse_ddi_jsonl(paths.ddi, ds.meds());
  return ds;
}

inline void write_dataset(const CorpusPaths& paths, const Dataset& ds) {
  for (std::size_t k = 0; k < 4; ++k) write_vocabulary_jsonl(paths.vocabs[k], ds.vocabs[k]);
  write_ehr_jsonl(paths.ehr, ds);
  if (ds.ddi && !paths.ddi.empty()) write_ddi_jsonl(paths.ddi, *ds.ddi, ds.meds());
}

// ---------------------------------------------------------------------------
// Train / validation / test split by patient

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Seeded 2/3 : 1/6 : 1/6 partition of patient indices [0, n).
inline Split split_patients(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * 2.0 / 3.0));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(static_cast<double>(n) / 6.0)));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

}  // namespace nlammr
