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
#include <cstddef>
#include <vector>

#include "nlammr/errors.hpp"
#include "nlammr/tensor.hpp"

namespace nlammr {

struct AdamOptions {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Owns the moment estimates of a fixed parameter
// list; step() consumes the accumulated gradients and zeroes them.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions opts = {}) : params_(std::move(params)), opts_(opts) {
    if (!(opts_.lr > 0.0)) throw ContractError("adam: lr must be positive");
    if (!(opts_.beta1 > 0.0 && opts_.beta1 < 1.0 && opts_.beta2 > 0.0 && opts_.beta2 < 1.0)) {
      throw ContractError("adam: betas must lie in (0, 1)");
    }
    first_.reserve(params_.size());
    second_.reserve(params_.size());
    for (const auto& p : params_) {
      first_.emplace_back(p.numel(), 0.0);
      second_.emplace_back(p.numel(), 0.0);
    }
  }

  void step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (!params_[k].requires_grad() || !params_[k].has_grad()) {
        throw ContractError("adam: parameter " + std::to_string(k) + " " +
                            shape_str(params_[k].shape()) + " has no gradient");
      }
    }
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    const double bc1 = 1.0 - std::pow(opts_.beta1, t);
    const double bc2 = 1.0 - std::pow(opts_.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor& p = params_[k];
      auto w = p.mutable_data();
      auto g = p.mutable_grad();
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        w[i] -= opts_.lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
      }
      p.zero_grad();
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  double lr() const { return opts_.lr; }
  void set_lr(double lr) {
    if (!(lr > 0.0)) throw ContractError("adam: lr must be positive");
    opts_.lr = lr;
  }
  std::size_t step_count() const { return step_count_; }
  const AdamOptions& options() const { return opts_; }
  const std::vector<double>& first_moment(std::size_t k) const { return first_[k]; }
  const std::vector<double>& second_moment(std::size_t k) const { return second_[k]; }

 private:
  std::vector<Tensor> params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t step_count_ = 0;
};

// lr(epoch) = base * factor^floor(epoch / period).
struct StepDecay {
  double factor = 0.95;
  std::size_t period = 10;

  double lr_at(double base, std::size_t epoch) const {
    if (period == 0) return base;
    return base * std::pow(factor, static_cast<double>(epoch / period));
  }
};

}  // namespace nlammr
