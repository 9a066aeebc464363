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

// Helpers shared by the unit and acceptance tests.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "nlammr/cli.hpp"
#include "nlammr/model.hpp"
#include "nlammr/synthetic.hpp"
#include "nlammr/tensor.hpp"

namespace nlammr::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Central finite differences of `f` with respect to every entry of `param`.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, Tensor param, double h = 1e-6) {
  std::vector<double> g(param.numel());
  auto data = param.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double keep = data[i];
    data[i] = keep + h;
    const double up = f();
    data[i] = keep - h;
    const double down = f();
    data[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||); 0 when both are (numerically) zero.
inline double relative_error(std::span<const double> a, std::span<const double> b, double tiny = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  if (denom < tiny) return std::sqrt(diff);
  return std::sqrt(diff) / denom;
}

// Analytic vs numeric gradient of a scalar function of `params`; returns the
// worst per-tensor relative error.
inline double gradient_check(const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
                             double h = 1e-6) {
  for (auto p : params) p.zero_grad();
  backward(loss());
  double worst = 0.0;
  for (const auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto numeric = numeric_gradient([&] { return loss().item(); }, p, h);
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("nlammr-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline ModelConfig small_model_config(std::size_t d_enc = 16) {
  ModelConfig c;
  c.d_enc = d_enc;
  c.d_s = 8;
  c.d_k = 8;
  c.hidden = 12;
  c.gin_layers = 2;
  c.dropout = 0.0;
  return c;
}

// A loaded corpus with pseudo-embeddings, kept together so ModelInputs stay
// valid.
struct Fixture {
  Dataset dataset;
  MoleculeSet molecules;
  EmbeddingTable table;
  std::vector<MoleculeGraph> graphs;

  ModelInputs inputs() const { return ModelInputs(dataset, table, graphs); }
};

inline std::unique_ptr<Fixture> synthetic_fixture(const SynthConfig& cfg, std::size_t d_enc,
                                                  std::uint64_t emb_seed = 0) {
  auto f = std::make_unique<Fixture>();
  SyntheticCorpus c = gen_synthetic(cfg);
  f->dataset = std::move(c.dataset);
  f->molecules = std::move(c.molecules);
  f->graphs = f->molecules.for_vocabulary(f->dataset.meds());
  f->table = make_pseudo_table(collect_text_keys(f->dataset), d_enc, emb_seed);
  return f;
}

// Two patients, three visits in total, five medications. The second
// patient's second visit has no procedures.
inline std::unique_ptr<Fixture> micro_fixture(std::size_t d_enc) {
  SynthConfig sc;
  sc.seed = 5;
  sc.n_patients = 2;
  sc.n_diag = 6;
  sc.n_proc = 4;
  sc.n_symp = 4;
  sc.n_med = 5;
  sc.max_visits = 1;
  sc.meds_per_visit = 3;
  sc.max_atoms = 6;
  auto f = synthetic_fixture(sc, d_enc);
  Dataset& ds = f->dataset;
  Visit extra = ds.patients[0].visits[0];
  extra.of(CodeKind::procedure).clear();
  extra.of(CodeKind::medication) = {1, 4};
  ds.patients[1].visits.push_back(extra);
  f->table = make_pseudo_table(collect_text_keys(ds), d_enc, 0);
  return f;
}

}  // namespace nlammr::testing
