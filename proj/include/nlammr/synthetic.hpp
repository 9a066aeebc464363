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

// Seeded synthetic EHR corpus with planted, learnable structure.
//
// Every patient carries one chronic condition for life and presents with an
// acute condition drawn afresh at each visit.
//   * Each condition owns fixed diagnosis/procedure/symptom code sets and a
//     fixed medication set; chronic medications come from the first half of
//     the medication vocabulary, acute ones from the second half.
//   * A visit prescribes chronic meds + acute meds.
//   * Chronic diagnosis codes are recorded on the first visit only. Later
//     visits show just the acute condition, so the chronic part of their
//     prescription is recoverable only from earlier prescriptions.
//   * Medication i of the second half shares its molecular graph with
//     medication i of the first half (structural analogs with different
//     uses). Structure alone cannot tell such a pair apart; the descriptions
//     can.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "nlammr/ehr.hpp"
#include "nlammr/molgraph.hpp"
#include "nlammr/rng.hpp"

namespace nlammr {

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t n_patients = 30;
  std::size_t n_diag = 40;
  std::size_t n_proc = 20;
  std::size_t n_symp = 20;
  std::size_t n_med = 10;
  std::size_t max_visits = 4;
  std::size_t n_chronic = 3;
  std::size_t n_acute = 4;
  std::size_t meds_per_visit = 6;  // target prescription size
  std::size_t meds_spread = 2;     // sizes stay within target +- spread when the vocabulary allows
  double ddi_fraction = 0.1;       // share of medication pairs that interact
  bool with_ddi = true;
  std::size_t min_atoms = 4;
  std::size_t max_atoms = 12;

  void validate() const {
    if (n_patients == 0) throw ValidationError("synthetic: n_patients must be >= 1");
    if (n_diag == 0 || n_proc == 0 || n_symp == 0 || n_med == 0) {
      throw ValidationError("synthetic: vocabulary sizes must be >= 1");
    }
    if (max_visits == 0) throw ValidationError("synthetic: max_visits must be >= 1");
    if (n_chronic == 0 || n_acute == 0) throw ValidationError("synthetic: need >= 1 chronic and acute condition");
    if (meds_per_visit == 0) throw ValidationError("synthetic: meds_per_visit must be >= 1");
    if (min_atoms == 0 || min_atoms > max_atoms) throw ValidationError("synthetic: bad atom range");
  }
};

struct SyntheticCorpus {
  Dataset dataset;
  MoleculeSet molecules;
};

inline const FeatureCardinalities& synthetic_cardinalities() {
  // atomic number, chirality, degree, formal charge, #H, radical electrons,
  // hybridization, aromatic, in-ring | bond type, stereo, conjugated
  static const FeatureCardinalities c{{12, 4, 6, 5, 5, 3, 6, 2, 2}, {4, 3, 2}};
  return c;
}

namespace detail {

inline std::string padded_code(char prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

// Draws unique phrases by combining word lists; falls back to a numbered
// suffix once the combinations run dry.
class PhraseMaker {
 public:
  PhraseMaker(std::vector<std::vector<std::string>> parts, std::string joiner)
      : parts_(std::move(parts)), joiner_(std::move(joiner)) {}

  std::string next(Rng& rng) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::string s;
      for (std::size_t k = 0; k < parts_.size(); ++k) {
        if (k) s += joiner_;
        s += parts_[k][rng.below(parts_[k].size())];
      }
      if (used_.insert(s).second) return s;
    }
    std::string s = parts_[0][rng.below(parts_[0].size())] + joiner_ + "unspecified variant " +
                    std::to_string(used_.size());
    used_.insert(s);
    return s;
  }

 private:
  std::vector<std::vector<std::string>> parts_;
  std::string joiner_;
  std::set<std::string> used_;
};

inline Vocabulary make_vocabulary(CodeKind kind, std::size_t n, Rng& rng) {
  Vocabulary v(kind);
  PhraseMaker diag({{"acute", "chronic", "recurrent", "mild", "severe", "unspecified", "congenital", "secondary"},
                    {"renal", "hepatic", "cardiac", "pulmonary", "gastric", "cerebral", "vascular", "thyroid",
                     "pancreatic", "cutaneous", "musculoskeletal", "urinary"},
                    {"insufficiency", "inflammation", "infection", "hypertension", "obstruction", "failure",
                     "neoplasm", "dysfunction", "hemorrhage", "ulceration"}},
                   " ");
  PhraseMaker proc({{"diagnostic", "therapeutic", "percutaneous", "endoscopic", "open", "laparoscopic"},
                    {"drainage", "biopsy", "catheterization", "excision", "imaging", "ventilation", "transfusion",
                     "dialysis", "repair"},
                    {"of kidney", "of liver", "of heart", "of lung", "of stomach", "of vessel", "of bladder",
                     "of skin"}},
                   " ");
  PhraseMaker symp({{"persistent", "intermittent", "sudden", "progressive", "nocturnal"},
                    {"chest pain", "dyspnea", "fatigue", "fever", "nausea", "dizziness", "edema", "cough",
                     "headache", "palpitations", "abdominal pain", "confusion"}},
                   " ");
  PhraseMaker med({{"Agents acting on the renin-angiotensin system", "Beta blocking agents", "Diuretics",
                    "Anticoagulants", "Antibacterials for systemic use", "Lipid modifying agents",
                    "Drugs for acid related disorders", "Insulins and analogues", "Corticosteroids",
                    "Opioid analgesics", "Antiepileptics", "Antithrombotic agents"},
                   {"used to lower blood pressure", "used to control heart rate", "used to reduce fluid overload",
                    "used to prevent clot formation", "used to treat bacterial infection",
                    "used to reduce cholesterol", "used to reduce gastric acid", "used to control blood glucose",
                    "used to suppress inflammation", "used to relieve severe pain", "used to prevent seizures"}},
                  ", ");
  const char prefix = kind == CodeKind::diagnosis ? 'D' : kind == CodeKind::procedure ? 'P'
                      : kind == CodeKind::symptom ? 'S' : 'M';
  PhraseMaker& maker = kind == CodeKind::diagnosis ? diag : kind == CodeKind::procedure ? proc
                       : kind == CodeKind::symptom ? symp : med;
  for (std::size_t i = 0; i < n; ++i) v.add(padded_code(prefix, i, 3), maker.next(rng));
  return v;
}

inline std::vector<std::size_t> sorted_sample(Rng& rng, std::size_t n, std::size_t k) {
  auto s = rng.sample(n, k);
  std::sort(s.begin(), s.end());
  return s;
}

// Sample from [base, base + n), sorted.
inline std::vector<std::size_t> sorted_sample_from(Rng& rng, std::size_t base, std::size_t n, std::size_t k) {
  auto s = sorted_sample(rng, n, k);
  for (auto& x : s) x += base;
  return s;
}

inline std::vector<std::size_t> set_union(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Random connected molecule: a random tree plus an occasional ring closure.
inline MoleculeGraph random_molecule(Rng& rng, std::size_t min_atoms, std::size_t max_atoms,
                                     const FeatureCardinalities& cards) {
  MoleculeGraph g;
  const auto n = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(min_atoms),
                                                      static_cast<std::int64_t>(max_atoms)));
  static const std::array<int, 6> elements = {5, 5, 5, 6, 7, 8};  // carbon-heavy palette
  for (std::size_t a = 0; a < n; ++a) {
    AtomFeatures f{};
    f[0] = elements[rng.below(elements.size())];
    for (std::size_t k = 1; k < kAtomFeatures; ++k) f[k] = static_cast<int>(rng.below(static_cast<std::uint64_t>(cards.atom[k])));
    g.atoms.push_back(f);
  }
  std::set<std::pair<std::size_t, std::size_t>> used;
  auto add_bond = [&](std::size_t i, std::size_t j) {
    if (i == j || !used.insert(ordered_pair(i, j)).second) return;
    BondFeatures f{};
    for (std::size_t k = 0; k < kBondFeatures; ++k) f[k] = static_cast<int>(rng.below(static_cast<std::uint64_t>(cards.bond[k])));
    g.bonds.push_back({i, j, f});
  };
  for (std::size_t a = 1; a < n; ++a) add_bond(a, rng.below(a));
  if (n >= 4 && rng.bernoulli(0.5)) add_bond(0, n - 1);
  return g;
}

}  // namespace detail

inline SyntheticCorpus gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "synthetic"));
  SyntheticCorpus out;
  Dataset& ds = out.dataset;
  ds.vocab(CodeKind::diagnosis) = detail::make_vocabulary(CodeKind::diagnosis, cfg.n_diag, rng);
  ds.vocab(CodeKind::procedure) = detail::make_vocabulary(CodeKind::procedure, cfg.n_proc, rng);
  ds.vocab(CodeKind::symptom) = detail::make_vocabulary(CodeKind::symptom, cfg.n_symp, rng);
  ds.vocab(CodeKind::medication) = detail::make_vocabulary(CodeKind::medication, cfg.n_med, rng);

  // Medication pools: chronic [0, half), acute [half, n_med). A one-drug
  // vocabulary serves both roles.
  const std::size_t n_med = cfg.n_med;
  const std::size_t half = n_med >= 2 ? n_med / 2 : 1;
  const std::size_t chronic_pool = half;
  const std::size_t acute_base = n_med >= 2 ? half : 0;
  const std::size_t acute_pool = n_med - acute_base;

  const std::size_t target = cfg.meds_per_visit;
  const std::size_t jitter = cfg.meds_spread / 2;
  auto clamp_size = [](std::int64_t v, std::size_t pool) {
    return static_cast<std::size_t>(std::clamp<std::int64_t>(v, 1, static_cast<std::int64_t>(pool)));
  };
  const auto base_chronic = static_cast<std::int64_t>(target / 2);
  const auto base_acute = static_cast<std::int64_t>(target) - base_chronic;
  auto jittered = [&](std::int64_t base) {
    return base + rng.between(-static_cast<std::int64_t>(jitter), static_cast<std::int64_t>(jitter));
  };

  struct Condition {
    std::vector<std::size_t> diag, proc, symp, med;
  };
  std::vector<Condition> chronic(cfg.n_chronic), acute(cfg.n_acute);
  for (auto& c : chronic) {
    c.diag = detail::sorted_sample(rng, cfg.n_diag, std::min<std::size_t>(2, cfg.n_diag));
    c.med = detail::sorted_sample_from(rng, 0, chronic_pool, clamp_size(jittered(base_chronic), chronic_pool));
  }
  for (auto& a : acute) {
    a.diag = detail::sorted_sample(rng, cfg.n_diag, std::min<std::size_t>(2, cfg.n_diag));
    a.proc = detail::sorted_sample(rng, cfg.n_proc, std::min<std::size_t>(1 + rng.below(2), cfg.n_proc));
    a.symp = detail::sorted_sample(rng, cfg.n_symp, std::min<std::size_t>(1 + rng.below(3), cfg.n_symp));
    a.med = detail::sorted_sample_from(rng, acute_base, acute_pool, clamp_size(jittered(base_acute), acute_pool));
  }

  for (std::size_t p = 0; p < cfg.n_patients; ++p) {
    PatientRecord rec;
    rec.patient_id = detail::padded_code('p', p, 5);
    const Condition& ch = chronic[rng.below(chronic.size())];
    const auto n_visits = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(cfg.max_visits)));
    for (std::size_t t = 0; t < n_visits; ++t) {
      const Condition& ac = acute[rng.below(acute.size())];
      Visit v;
      v.of(CodeKind::diagnosis) = t == 0 ? detail::set_union(ch.diag, ac.diag) : ac.diag;
      v.of(CodeKind::procedure) = ac.proc;
      v.of(CodeKind::symptom) = ac.symp;
      v.of(CodeKind::medication) = detail::set_union(ch.med, ac.med);
      rec.visits.push_back(std::move(v));
    }
    ds.patients.push_back(std::move(rec));
  }

  if (cfg.with_ddi) {
    DdiSet pairs;
    for (std::size_t a = 0; a < n_med; ++a)
      for (std::size_t b = a + 1; b < n_med; ++b)
        if (rng.bernoulli(cfg.ddi_fraction)) pairs.insert({a, b});
    ds.ddi = std::move(pairs);
  }

  out.molecules.cards = synthetic_cardinalities();
  std::vector<MoleculeGraph> scaffolds;
  for (std::size_t i = 0; i < n_med; ++i) {
    const bool analog = n_med >= 2 && i >= half && i - half < half;
    if (!analog) {
      scaffolds.push_back(detail::random_molecule(rng, cfg.min_atoms, cfg.max_atoms, out.molecules.cards));
    }
    const MoleculeGraph& g = analog ? scaffolds[i - half] : scaffolds.back();
    out.molecules.entries.emplace_back(ds.meds().code(i), g);
  }
  return out;
}

// Writes the standard corpus layout: ehr.jsonl, vocab_{diag,proc,symp,med}.jsonl,
// molecules.json and (when present) ddi.jsonl.
inline void write_corpus(const std::string& dir, const SyntheticCorpus& corpus) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create \"" + dir + "\": " + ec.message());
  CorpusPaths paths = CorpusPaths::in_dir(dir);
  if (!corpus.dataset.ddi) paths.ddi.clear();
  write_dataset(paths, corpus.dataset);
  write_molecule_file(dir + "/molecules.json", corpus.molecules);
}

}  // namespace nlammr
