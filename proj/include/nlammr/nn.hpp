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
#include <string>
#include <utility>
#include <vector>

#include "nlammr/rng.hpp"
#include "nlammr/tensor.hpp"

namespace nlammr {

// Training/eval switch threaded through every forward pass. Dropout is only
// applied when `training` is set and an rng is supplied.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  Tensor maybe_dropout(const Tensor& x) const {
    if (!training || rng == nullptr || dropout <= 0.0) return x;
    return nlammr::dropout(x, dropout, *rng);
  }
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Glorot-uniform (fan_in x fan_out) weight matrix.
inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& v : w) v = rng.uniform(-limit, limit);
  return Tensor::matrix(fan_in, fan_out, std::move(w), true);
}

inline Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::vector<double> w(rows * cols);
  for (double& v : w) v = stddev * rng.normal();
  return Tensor::matrix(rows, cols, std::move(w), true);
}

// y = x W + b, x is (n x in).
struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out

  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    return {glorot(in, out, rng), Tensor::vector(std::vector<double>(out, 0.0), true)};
  }

  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

// Linear -> ReLU -> dropout -> Linear.
struct Mlp2 {
  Linear first;
  Linear second;

  static Mlp2 init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    Linear a = Linear::init(in, hidden, rng);
    Linear b = Linear::init(hidden, out, rng);
    return {std::move(a), std::move(b)};
  }

  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const {
    return second(ctx.maybe_dropout(relu(first(x))));
  }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    first.collect(prefix + ".0", out);
    second.collect(prefix + ".1", out);
  }
};

}  // namespace nlammr
