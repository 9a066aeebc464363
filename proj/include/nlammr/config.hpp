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

// Run configuration shared by all commands. One JSON document:
//
//   {
//     "seed": 0,
//     "paths": {"corpus": dir, "ehr": f, "vocab_diag": f, "vocab_proc": f,
//               "vocab_symp": f, "vocab_med": f, "molecules": f,
//               "embeddings": f, "ddi": f, "out_dir": dir},
//     "pseudo_embeddings": {"enabled": false, "seed": 0},
//     "model": {...}, "train": {...}, "prediction": {"delta": 0.5},
//     "eval": {"bootstrap_rounds": 10}, "synth": {...}
//   }
//
// Every key is optional. "corpus" names a directory holding the standard
// file names; explicit per-file paths win over it.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "nlammr/model.hpp"
#include "nlammr/synthetic.hpp"
#include "nlammr/training.hpp"

namespace nlammr {

struct RunPaths {
  std::string corpus;
  std::string ehr;
  std::array<std::string, 4> vocabs;
  std::string molecules;
  std::string embeddings;
  std::string ddi;
  std::string out_dir = ".";
};

struct RunConfig {
  std::uint64_t seed = 0;
  RunPaths paths;
  bool pseudo_embeddings = false;
  std::uint64_t pseudo_seed = 0;
  ModelConfig model;
  TrainConfig train;
  std::size_t bootstrap_rounds = 10;
  SynthConfig synth;

  // Model settings with the run seed applied.
  ModelConfig model_config() const {
    ModelConfig m = model;
    m.init_seed = seed;
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  SynthConfig synth_config() const {
    SynthConfig s = synth;
    s.seed = seed;
    return s;
  }

  EvalConfig eval_config() const { return EvalConfig{train.prediction, bootstrap_rounds, seed}; }

  // Corpus file locations after resolving the "corpus" directory shortcut.
  CorpusPaths corpus_paths() const {
    CorpusPaths p = paths.corpus.empty() ? CorpusPaths{} : CorpusPaths::in_dir(paths.corpus);
    if (!paths.corpus.empty() && !std::filesystem::exists(p.ddi)) p.ddi.clear();
    if (!paths.ehr.empty()) p.ehr = paths.ehr;
    for (std::size_t k = 0; k < 4; ++k)
      if (!paths.vocabs[k].empty()) p.vocabs[k] = paths.vocabs[k];
    if (!paths.ddi.empty()) p.ddi = paths.ddi;
    return p;
  }

  std::string molecules_path() const {
    if (!paths.molecules.empty()) return paths.molecules;
    return paths.corpus.empty() ? std::string() : paths.corpus + "/molecules.json";
  }

  // Checks that a model can be built and fed: knob ranges, embedding source
  // and input files. Missing files raise IoError.
  void validate_for_model() const {
    model_config().validate();
    train_config().validate();
    if (pseudo_embeddings && !paths.embeddings.empty()) {
      throw ValidationError("config: pseudo embeddings and an embeddings file are mutually exclusive");
    }
    if (!pseudo_embeddings && paths.embeddings.empty()) {
      throw ValidationError("config: no embeddings file (set paths.embeddings or use pseudo embeddings)");
    }
    const CorpusPaths c = corpus_paths();
    auto need = [](const std::string& what, const std::string& path) {
      if (path.empty()) throw ValidationError("config: no " + what + " path");
      if (!std::filesystem::exists(path)) throw IoError(what + " file not found: " + path);
    };
    need("EHR", c.ehr);
    for (CodeKind k : kAllKinds) need(std::string(kind_name(k)) + " vocabulary", c.vocabs[kind_index(k)]);
    need("molecule", molecules_path());
    if (!c.ddi.empty()) need("DDI", c.ddi);
    if (!pseudo_embeddings) need("embeddings", paths.embeddings);
  }
};

namespace detail {

inline const char* selection_name(Selection s) { return s == Selection::best_val ? "best_val" : "last"; }

inline Selection selection_from(const std::string& s) {
  if (s == "best_val") return Selection::best_val;
  if (s == "last") return Selection::last;
  throw ValidationError("config: train.selection must be \"best_val\" or \"last\", got \"" + s + "\"");
}

template <typename T>
void read_if(const ojson& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

}  // namespace detail

inline ojson run_config_to_json(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  ojson p;
  p["corpus"] = c.paths.corpus;
  p["ehr"] = c.paths.ehr;
  p["vocab_diag"] = c.paths.vocabs[0];
  p["vocab_proc"] = c.paths.vocabs[1];
  p["vocab_symp"] = c.paths.vocabs[2];
  p["vocab_med"] = c.paths.vocabs[3];
  p["molecules"] = c.paths.molecules;
  p["embeddings"] = c.paths.embeddings;
  p["ddi"] = c.paths.ddi;
  p["out_dir"] = c.paths.out_dir;
  j["paths"] = p;
  j["pseudo_embeddings"] = {{"enabled", c.pseudo_embeddings}, {"seed", c.pseudo_seed}};
  ojson m = model_config_to_json(c.model);
  m.erase("init_seed");
  j["model"] = m;
  ojson t;
  t["alpha"] = c.train.alpha;
  t["lr"] = c.train.lr;
  t["epochs"] = c.train.epochs;
  t["batch_size"] = c.train.batch_size;
  t["lr_decay"] = {{"factor", c.train.decay.factor}, {"period", c.train.decay.period}};
  t["selection"] = detail::selection_name(c.train.selection);
  j["train"] = t;
  j["prediction"] = {{"delta", c.train.prediction.delta}};
  j["eval"] = {{"bootstrap_rounds", c.bootstrap_rounds}};
  ojson s;
  s["n_patients"] = c.synth.n_patients;
  s["n_diag"] = c.synth.n_diag;
  s["n_proc"] = c.synth.n_proc;
  s["n_symp"] = c.synth.n_symp;
  s["n_med"] = c.synth.n_med;
  s["max_visits"] = c.synth.max_visits;
  s["n_chronic"] = c.synth.n_chronic;
  s["n_acute"] = c.synth.n_acute;
  s["meds_per_visit"] = c.synth.meds_per_visit;
  s["meds_spread"] = c.synth.meds_spread;
  s["ddi_fraction"] = c.synth.ddi_fraction;
  s["with_ddi"] = c.synth.with_ddi;
  s["min_atoms"] = c.synth.min_atoms;
  s["max_atoms"] = c.synth.max_atoms;
  j["synth"] = s;
  return j;
}

inline RunConfig run_config_from_json(const ojson& j) {
  if (!j.is_object()) throw ValidationError("config: top level must be a JSON object");
  RunConfig c;
  try {
    detail::read_if(j, "seed", c.seed);
    if (j.contains("paths")) {
      const ojson& p = j.at("paths");
      detail::read_if(p, "corpus", c.paths.corpus);
      detail::read_if(p, "ehr", c.paths.ehr);
      detail::read_if(p, "vocab_diag", c.paths.vocabs[0]);
      detail::read_if(p, "vocab_proc", c.paths.vocabs[1]);
      detail::read_if(p, "vocab_symp", c.paths.vocabs[2]);
      detail::read_if(p, "vocab_med", c.paths.vocabs[3]);
      detail::read_if(p, "molecules", c.paths.molecules);
      detail::read_if(p, "embeddings", c.paths.embeddings);
      detail::read_if(p, "ddi", c.paths.ddi);
      detail::read_if(p, "out_dir", c.paths.out_dir);
    }
    if (j.contains("pseudo_embeddings")) {
      const ojson& pe = j.at("pseudo_embeddings");
      detail::read_if(pe, "enabled", c.pseudo_embeddings);
      detail::read_if(pe, "seed", c.pseudo_seed);
    }
    if (j.contains("model")) {
      ojson m = j.at("model");
      m.erase("init_seed");
      model_config_from_json(m, c.model);
    }
    if (j.contains("train")) {
      const ojson& t = j.at("train");
      detail::read_if(t, "alpha", c.train.alpha);
      detail::read_if(t, "lr", c.train.lr);
      detail::read_if(t, "epochs", c.train.epochs);
      detail::read_if(t, "batch_size", c.train.batch_size);
      if (t.contains("lr_decay")) {
        detail::read_if(t.at("lr_decay"), "factor", c.train.decay.factor);
        detail::read_if(t.at("lr_decay"), "period", c.train.decay.period);
      }
      if (t.contains("selection")) c.train.selection = detail::selection_from(t.at("selection").get<std::string>());
    }
    if (j.contains("prediction")) detail::read_if(j.at("prediction"), "delta", c.train.prediction.delta);
    if (j.contains("eval")) detail::read_if(j.at("eval"), "bootstrap_rounds", c.bootstrap_rounds);
    if (j.contains("synth")) {
      const ojson& s = j.at("synth");
      detail::read_if(s, "n_patients", c.synth.n_patients);
      detail::read_if(s, "n_diag", c.synth.n_diag);
      detail::read_if(s, "n_proc", c.synth.n_proc);
      detail::read_if(s, "n_symp", c.synth.n_symp);
      detail::read_if(s, "n_med", c.synth.n_med);
      detail::read_if(s, "max_visits", c.synth.max_visits);
      detail::read_if(s, "n_chronic", c.synth.n_chronic);
      detail::read_if(s, "n_acute", c.synth.n_acute);
      detail::read_if(s, "meds_per_visit", c.synth.meds_per_visit);
      detail::read_if(s, "meds_spread", c.synth.meds_spread);
      detail::read_if(s, "ddi_fraction", c.synth.ddi_fraction);
      detail::read_if(s, "with_ddi", c.synth.with_ddi);
      detail::read_if(s, "min_atoms", c.synth.min_atoms);
      detail::read_if(s, "max_atoms", c.synth.max_atoms);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

inline ojson read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open \"" + path + "\"");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return ojson::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config \"" + path + "\": " + e.what());
  }
}

// File values first, then `overrides` merged on top (RFC 7386 merge patch).
inline RunConfig load_run_config(const std::string& path, const ojson& overrides = ojson::object()) {
  ojson doc = path.empty() ? ojson::object() : read_json_file(path);
  doc.merge_patch(overrides);
  return run_config_from_json(doc);
}

inline void write_json_file(const std::string& path, const ojson& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open \"" + path + "\" for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace nlammr
