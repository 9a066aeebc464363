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

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nlammr/adam.hpp"
#include "nlammr/evaluate.hpp"
#include "nlammr/model.hpp"
#include "nlammr/tensor.hpp"

namespace nlammr {

inline constexpr double kLogFloor = 1e-12;

// -sum_t sum_i [ y log p + (1 - y) log(1 - p) ] over a (T x |M|) score
// matrix, logs clamped at kLogFloor.
inline Tensor bce_loss(const Tensor& scores, const Tensor& labels) {
  if (scores.shape() != labels.shape()) {
    throw ShapeError("bce_loss: scores " + shape_str(scores.shape()) + " vs labels " + shape_str(labels.shape()));
  }
  Tensor pos = mul(labels, log_clamped(scores, kLogFloor));
  Tensor neg = mul(affine(labels, -1.0, 1.0), log_clamped(affine(scores, -1.0, 1.0), kLogFloor));
  return scale(sum(add(pos, neg)), -1.0);
}

// sum_t sum_{i pos} sum_{j neg} max(1 - (p_i - p_j), 0) / |M|.
inline Tensor margin_loss(const Tensor& scores, const Tensor& labels) {
  if (scores.shape() != labels.shape()) {
    throw ShapeError("margin_loss: scores " + shape_str(scores.shape()) + " vs labels " + shape_str(labels.shape()));
  }
  const std::size_t visits = scores.rows(), n = scores.cols();
  Tensor acc;
  for (std::size_t t = 0; t < visits; ++t) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) (labels.at(t, i) > 0.5 ? pos : neg).push_back(i);
    Tensor term = pairwise_hinge(visits == 1 ? scores : gather_rows(scores, {t}), pos, neg, 1.0);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, 1.0 / static_cast<double>(n));
}

// alpha * bce + (1 - alpha) * margin.
inline Tensor total_loss(const Tensor& bce, const Tensor& margin, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ContractError("total_loss: alpha must lie in [0, 1]");
  return add(scale(bce, alpha), scale(margin, 1.0 - alpha));
}

// Visit-summed loss of one patient.
inline Tensor patient_loss(const Model& model, const ModelInputs& in, const PatientRecord& patient,
                           const Tensor& med_proj, const ForwardContext& ctx, double alpha) {
  Tensor scores = patient_scores(model, in, patient, med_proj, ctx);
  Tensor labels = patient_labels(patient, in.num_meds());
  return total_loss(bce_loss(scores, labels), margin_loss(scores, labels), alpha);
}

// Mean over `patients` of the per-patient loss.
inline Tensor batch_loss(const Model& model, const ModelInputs& in, const std::vector<std::size_t>& patients,
                         const ForwardContext& ctx, double alpha) {
  if (patients.empty()) throw ContractError("batch_loss: empty batch");
  Tensor med_proj = medication_projection(model, in, ctx);
  Tensor acc;
  for (auto pi : patients) {
    Tensor l = patient_loss(model, in, in.dataset().patients.at(pi), med_proj, ctx, alpha);
    acc = acc.defined() ? add(acc, l) : l;
  }
  return scale(acc, 1.0 / static_cast<double>(patients.size()));
}

enum class Selection { best_val, last };

struct TrainConfig {
  double alpha = 0.95;
  double lr = 5e-4;
  std::size_t epochs = 110;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  StepDecay decay{};
  Selection selection = Selection::best_val;
  PredictionConfig prediction{};

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw ValidationError("train: alpha must lie in [0, 1]");
    if (!(lr > 0.0)) throw ValidationError("train: lr must be positive");
    if (batch_size == 0) throw ValidationError("train: batch_size must be >= 1");
    if (!(decay.factor > 0.0)) throw ValidationError("train: lr decay factor must be positive");
    prediction.validate();
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_jaccard;
  std::optional<double> val_f1;
  std::optional<double> val_prauc;

  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::optional<std::size_t> selected_epoch;  // epoch whose parameters were kept
  std::optional<double> selected_val_jaccard;
};

// Called after every epoch with the finished log row.
using EpochCallback = std::function<void(const EpochLog&)>;

// Mini-batch training with Adam and step-decayed learning rate. Batches are
// drawn from a seeded shuffle of the training patients each epoch; with
// Selection::best_val the parameters of the epoch with the highest
// validation Jaccard are restored at the end.
inline TrainResult train(Model& model, const ModelInputs& in, const Split& split, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  check_compatible(model, in);
  TrainResult result;
  if (cfg.epochs == 0) return result;
  if (split.train.empty()) throw ValidationError("train: empty training split");

  Adam opt(model.parameters(), AdamOptions{cfg.lr});
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  const bool use_val = cfg.selection == Selection::best_val && !split.val.empty();
  std::optional<Model> best;
  EvalConfig val_cfg{cfg.prediction, 0, 0};

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(cfg.decay.lr_at(cfg.lr, epoch));
    std::vector<std::size_t> order = split.train;
    shuffle_rng.shuffle(order);

    double loss_acc = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      ForwardContext ctx{true, model.config.dropout, &dropout_rng};
      Tensor med_proj = medication_projection(model, in, ctx);
      Tensor acc;
      for (std::size_t k = start; k < stop; ++k) {
        const PatientRecord& p = in.dataset().patients.at(order[k]);
        Tensor l = patient_loss(model, in, p, med_proj, ctx, cfg.alpha);
        if (!std::isfinite(l.item())) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(n_batches) + ", patient \"" + p.patient_id + "\"");
        }
        acc = acc.defined() ? add(acc, l) : l;
      }
      Tensor loss = scale(acc, 1.0 / static_cast<double>(stop - start));
      backward(loss);
      opt.step();
      loss_acc += loss.item();
      ++n_batches;
    }

    EpochLog row;
    row.epoch = epoch;
    row.lr = opt.lr();
    row.train_loss = loss_acc / static_cast<double>(n_batches);
    if (!split.val.empty()) {
      const EvalReport rep = evaluate(model, in, split.val, val_cfg);
      row.val_jaccard = rep.jaccard.mean;
      row.val_f1 = rep.f1.mean;
      row.val_prauc = rep.prauc.mean;
      if (use_val && (!result.selected_val_jaccard || rep.jaccard.mean > *result.selected_val_jaccard)) {
        result.selected_val_jaccard = rep.jaccard.mean;
        result.selected_epoch = epoch;
        if (best) {
          model.copy_values_to(*best);
        } else {
          best = model.clone();
        }
      }
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }

  if (use_val && best) {
    best->copy_values_to(model);
  } else {
    result.selected_epoch = cfg.epochs - 1;
    result.selected_val_jaccard = result.log.back().val_jaccard;
  }
  return result;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,train_loss,val_jaccard,val_f1,val_prauc\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + "," + format_double(r.lr) + "," + format_double(r.train_loss) + "," +
           opt(r.val_jaccard) + "," + opt(r.val_f1) + "," + opt(r.val_prauc) + "\n";
  }
  return out;
}

inline void write_train_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open \"" + path + "\" for writing");
  out << train_log_csv(log);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace nlammr
