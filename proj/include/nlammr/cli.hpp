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

// Commands behind the `nlammr` tool: gen-synth, train, eval, predict.
// Each cmd_* function is usable on its own; run_cli adds argument parsing
// and maps failures to exit codes.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nlammr/checkpoint.hpp"
#include "nlammr/config.hpp"
#include "nlammr/evaluate.hpp"
#include "nlammr/synthetic.hpp"
#include "nlammr/training.hpp"

namespace nlammr {

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitIo = 3, kExitNumeric = 4 };

inline constexpr const char* kCheckpointFile = "checkpoint.nlackpt";
inline constexpr const char* kTrainLogFile = "train_log.csv";

// Sidecar holding the config echo for formats without room for it.
inline std::string config_sidecar(const std::string& path) { return path + ".config.json"; }

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create directory \"" + dir + "\"" + (ec ? ": " + ec.message() : std::string()));
  }
}

inline void ensure_parent_dir(const std::string& file) {
  const auto parent = std::filesystem::path(file).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
}

// Loaded corpus plus embeddings. Not copyable: ModelInputs point into it.
struct Workspace {
  Dataset dataset;
  MoleculeSet molecules;
  EmbeddingTable table;
  std::vector<MoleculeGraph> graphs;

  Workspace() = default;
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  ModelInputs inputs() const { return ModelInputs(dataset, table, graphs); }
};

// Loads corpus, molecules and embeddings. When `patients_file` is given its
// patients replace the corpus patients (parsed against the corpus
// vocabularies, medications optional).
inline std::unique_ptr<Workspace> load_workspace(const RunConfig& cfg, const std::string& patients_file = {}) {
  cfg.validate_for_model();
  auto ws = std::make_unique<Workspace>();
  ws->dataset = load_dataset(cfg.corpus_paths());
  ws->molecules = load_molecule_file(cfg.molecules_path());
  ws->graphs = ws->molecules.for_vocabulary(ws->dataset.meds());

  std::vector<std::string> keys = collect_text_keys(ws->dataset);
  if (!patients_file.empty()) {
    if (!std::filesystem::exists(patients_file)) throw IoError("patient file not found: " + patients_file);
    ws->dataset.patients = parse_ehr_jsonl(patients_file, ws->dataset.vocabs, EhrParseOptions{false});
    for (auto& k : collect_text_keys(ws->dataset)) keys.push_back(std::move(k));
  }
  if (cfg.pseudo_embeddings) {
    ws->table = make_pseudo_table(keys, cfg.model.d_enc, cfg.pseudo_seed);
  } else {
    ws->table = load_embeddings(cfg.paths.embeddings);
    ws->table.freeze();
    for (const auto& k : keys) ws->table.lookup(k);  // fail early, naming the first missing key
  }
  if (ws->table.dim() != cfg.model.d_enc) {
    throw ValidationError("embeddings have dim " + std::to_string(ws->table.dim()) + ", model.d_enc is " +
                          std::to_string(cfg.model.d_enc));
  }
  return ws;
}

inline std::vector<std::size_t> split_indices(const Split& s, const std::string& name, std::size_t n) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  if (name == "all") {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  throw ValidationError("unknown split \"" + name + "\" (expected train, val, test or all)");
}

// Builds the model described by `cfg` and fills it from the checkpoint. The
// checkpoint's architecture must match the config exactly.
inline Model load_model_for(const RunConfig& cfg, const FeatureCardinalities& cards, const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  const CheckpointHeader h = decode_checkpoint_header(bytes);
  const ModelConfig want = cfg.model_config();
  ojson a = model_config_to_json(want), b = model_config_to_json(h.model);
  for (const char* k : {"init_seed", "dropout"}) {
    a.erase(k);
    b.erase(k);
  }
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (!b.contains(it.key()) || b.at(it.key()) != it.value()) {
      throw CheckpointError("checkpoint " + path + ": model." + it.key() + " is " +
                            (b.contains(it.key()) ? b.at(it.key()).dump() : std::string("missing")) +
                            ", config has " + it.value().dump());
    }
  }
  if (h.cards != cards) throw CheckpointError("checkpoint " + path + ": molecule feature cardinalities differ");
  Model m = Model::init(want, cards);
  load_checkpoint_into(bytes, m);
  return m;
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_gen_synth(const RunConfig& cfg) {
  const SyntheticCorpus corpus = gen_synthetic(cfg.synth_config());
  ensure_dir(cfg.paths.out_dir);
  write_corpus(cfg.paths.out_dir, corpus);
}

struct TrainOutcome {
  TrainResult result;
  std::optional<EvalReport> val_report;
  std::string checkpoint_path;
  std::string log_path;
};

inline TrainOutcome cmd_train(const RunConfig& cfg, std::ostream* progress = nullptr) {
  auto ws = load_workspace(cfg);
  const ModelInputs in = ws->inputs();
  Model model = Model::init(cfg.model_config(), ws->molecules.cards);
  const Split split = split_patients(ws->dataset.patients.size(), cfg.seed);
  ensure_dir(cfg.paths.out_dir);

  EpochCallback cb;
  if (progress) {
    cb = [progress](const EpochLog& r) {
      *progress << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.train_loss;
      if (r.val_jaccard) *progress << " val_jaccard " << *r.val_jaccard;
      *progress << "\n";
    };
  }
  TrainOutcome out;
  out.result = train(model, in, split, cfg.train_config(), cb);

  const ojson echo = run_config_to_json(cfg);
  out.checkpoint_path = cfg.paths.out_dir + "/" + kCheckpointFile;
  out.log_path = cfg.paths.out_dir + "/" + kTrainLogFile;
  save_checkpoint(out.checkpoint_path, model, echo);
  write_train_log(out.log_path, out.result.log);
  write_json_file(config_sidecar(out.log_path), echo);
  if (!split.val.empty()) out.val_report = evaluate(model, in, split.val, cfg.eval_config());
  return out;
}

inline ojson eval_report_document(const EvalReport& rep, const RunConfig& cfg, const std::string& split,
                                  const std::string& checkpoint) {
  ojson j = report_to_json(rep);
  j["split"] = split;
  j["checkpoint"] = checkpoint;
  j["config"] = run_config_to_json(cfg);
  return j;
}

// Evaluates the checkpoint on one split and writes the report JSON to
// `out_path` (skipped when empty).
inline EvalReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split_name,
                           const std::string& out_path) {
  auto ws = load_workspace(cfg);
  const ModelInputs in = ws->inputs();
  const Model model = load_model_for(cfg, ws->molecules.cards, checkpoint);
  const Split split = split_patients(ws->dataset.patients.size(), cfg.seed);
  const auto patients = split_indices(split, split_name, ws->dataset.patients.size());
  const EvalReport rep = evaluate(model, in, patients, cfg.eval_config());
  if (!out_path.empty()) write_json_file(out_path, eval_report_document(rep, cfg, split_name, checkpoint));
  return rep;
}

// Scores every visit in `patients_file` and writes one JSON line per visit.
inline std::vector<PredictionRecord> cmd_predict(const RunConfig& cfg, const std::string& checkpoint,
                                                 const std::string& patients_file, const std::string& out_path) {
  auto ws = load_workspace(cfg, patients_file);
  const ModelInputs in = ws->inputs();
  const Model model = load_model_for(cfg, ws->molecules.cards, checkpoint);
  const auto patients = split_indices(Split{}, "all", ws->dataset.patients.size());
  auto records = predict_patients(model, in, patients, cfg.train.prediction);
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open \"" + out_path + "\" for writing");
    for (const auto& r : records) out << prediction_to_json(r, ws->dataset.meds()).dump() << "\n";
    if (!out) throw IoError("write failed: " + out_path);
    write_json_file(config_sidecar(out_path), run_config_to_json(cfg));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Argument parsing

namespace detail {

// Collects flag values as a merge patch over the config file.
class OverrideSet {
 public:
  template <typename T>
  CLI::Option* option(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    return app->add_option_function<T>(
        flag, [this, pointer](const T& v) { patch_[ojson::json_pointer(pointer)] = v; }, help);
  }

  CLI::Option* set_flag(CLI::App* app, const std::string& flag, const std::string& pointer, bool value,
                        const std::string& help) {
    return app->add_flag_callback(
        flag, [this, pointer, value] { patch_[ojson::json_pointer(pointer)] = value; }, help);
  }

  void set(const std::string& pointer, ojson value) { patch_[ojson::json_pointer(pointer)] = std::move(value); }
  const ojson& patch() const { return patch_; }

 private:
  ojson patch_ = ojson::object();
};

inline void add_common(CLI::App* app, OverrideSet& ov, std::string& config_path) {
  app->add_option("-c,--config", config_path, "JSON config file");
  ov.option<std::uint64_t>(app, "--seed", "/seed", "Run seed");
  ov.option<std::string>(app, "--out-dir", "/paths/out_dir", "Output directory");
}

inline void add_model_inputs(CLI::App* app, OverrideSet& ov) {
  ov.option<std::string>(app, "--corpus", "/paths/corpus", "Corpus directory with the standard file names");
  ov.option<std::string>(app, "--ehr", "/paths/ehr", "EHR JSONL file");
  ov.option<std::string>(app, "--molecules", "/paths/molecules", "Molecule JSON file");
  ov.option<std::string>(app, "--ddi", "/paths/ddi", "DDI pair JSONL file");
  auto* emb = ov.option<std::string>(app, "--embeddings", "/paths/embeddings", "NLAEMB1 embedding file");
  auto* pseudo = app->add_option_function<std::uint64_t>(
      "--pseudo-embeddings",
      [&ov](const std::uint64_t& seed) {
        ov.set("/pseudo_embeddings/enabled", true);
        ov.set("/pseudo_embeddings/seed", seed);
      },
      "Use seeded pseudo-embeddings instead of a file");
  emb->excludes(pseudo);
  ov.option<std::size_t>(app, "--d-enc", "/model/d_enc", "Text embedding width");
  ov.option<std::size_t>(app, "--d-s", "/model/d_s", "Molecule embedding width");
  ov.option<std::size_t>(app, "--d-k", "/model/d_k", "Joint latent width");
  ov.option<std::size_t>(app, "--hidden", "/model/hidden", "Projection hidden width");
  ov.option<std::size_t>(app, "--gin-layers", "/model/gin_layers", "GIN depth");
  ov.option<std::size_t>(app, "--history-window", "/model/history_window", "Past visits kept (0 = all)");
  ov.set_flag(app, "--no-text", "/model/use_text", false, "Drop medication text embeddings");
  ov.set_flag(app, "--no-structure", "/model/use_structure", false, "Drop molecular structure embeddings");
  ov.set_flag(app, "--no-history", "/model/use_history", false, "Drop the medication history term");
  ov.set_flag(app, "--no-cross-attention", "/model/use_cross_attention", false, "Drop cross-attention fusion");
  ov.option<double>(app, "--delta", "/prediction/delta", "Prediction threshold");
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Medication recommendation: synthetic data, training, evaluation and prediction", "nlammr"};
  app.require_subcommand(1);
  detail::OverrideSet ov;
  std::string config_path, checkpoint, split = "test", patients_file, out_file;
  bool verbose = false;

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic corpus to --out-dir");
  detail::add_common(gen, ov, config_path);
  ov.option<std::size_t>(gen, "--patients", "/synth/n_patients", "Number of patients");
  ov.option<std::size_t>(gen, "--meds", "/synth/n_med", "Medication vocabulary size");
  ov.option<std::size_t>(gen, "--max-visits", "/synth/max_visits", "Maximum visits per patient");
  ov.set_flag(gen, "--no-ddi", "/synth/with_ddi", false, "Do not write a DDI file");

  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint and log to --out-dir");
  detail::add_common(tr, ov, config_path);
  detail::add_model_inputs(tr, ov);
  ov.option<std::size_t>(tr, "--epochs", "/train/epochs", "Epochs");
  ov.option<double>(tr, "--lr", "/train/lr", "Initial learning rate");
  ov.option<double>(tr, "--alpha", "/train/alpha", "BCE weight in the total loss");
  ov.option<std::size_t>(tr, "--batch-size", "/train/batch_size", "Patients per batch");
  ov.option<std::string>(tr, "--selection", "/train/selection", "best_val or last");
  tr->add_flag("-v,--verbose", verbose, "Print one line per epoch");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split and write a report");
  detail::add_common(ev, ov, config_path);
  detail::add_model_inputs(ev, ov);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--split", split, "train, val, test or all")->capture_default_str();
  ev->add_option("-o,--out", out_file, "Report path (default <out-dir>/report_<split>.json)");
  ov.option<std::size_t>(ev, "--bootstrap-rounds", "/eval/bootstrap_rounds", "Bootstrap rounds (0 = none)");

  auto* pr = app.add_subcommand("predict", "Score the visits of a patient file");
  detail::add_common(pr, ov, config_path);
  detail::add_model_inputs(pr, ov);
  pr->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  pr->add_option("--patients", patients_file, "EHR JSONL file with the patients to score")->required();
  pr->add_option("-o,--out", out_file, "Output JSONL (default <out-dir>/predictions.jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    const RunConfig cfg = load_run_config(config_path, ov.patch());
    if (*gen) {
      cmd_gen_synth(cfg);
      out << "wrote synthetic corpus to " << cfg.paths.out_dir << "\n";
    } else if (*tr) {
      const TrainOutcome o = cmd_train(cfg, verbose ? &out : nullptr);
      out << "checkpoint " << o.checkpoint_path << "\n";
      if (o.result.selected_epoch) out << "selected epoch " << *o.result.selected_epoch << "\n";
      if (o.val_report) {
        out << "val jaccard " << o.val_report->jaccard.mean << " f1 " << o.val_report->f1.mean << " prauc "
            << o.val_report->prauc.mean << "\n";
      }
    } else if (*ev) {
      if (out_file.empty()) out_file = cfg.paths.out_dir + "/report_" + split + ".json";
      ensure_parent_dir(out_file);
      const EvalReport rep = cmd_eval(cfg, checkpoint, split, out_file);
      out << "jaccard " << rep.jaccard.mean << " f1 " << rep.f1.mean << " prauc " << rep.prauc.mean << "\n";
      out << "report " << out_file << "\n";
    } else if (*pr) {
      if (out_file.empty()) out_file = cfg.paths.out_dir + "/predictions.jsonl";
      ensure_parent_dir(out_file);
      const auto records = cmd_predict(cfg, checkpoint, patients_file, out_file);
      out << records.size() << " visits scored, predictions " << out_file << "\n";
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace nlammr
