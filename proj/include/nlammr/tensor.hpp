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

// Dense row-major float64 tensors with tape-free, graph-based reverse-mode
// differentiation.
//
// A Tensor is a cheap handle onto a shared node. Every op that sees at least
// one input with requires_grad records its parents and a backward closure;
// backward() walks the recorded graph in reverse topological order. Leaves
// (tensors created directly, e.g. parameters) accumulate gradients across
// backward calls until zero_grad(); interior nodes are re-zeroed on every
// backward call.
//
// Rank 0, 1 and 2 shapes are supported. Matrix ops view a rank-1 tensor of
// length n as a 1 x n row.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nlammr/errors.hpp"
#include "nlammr/rng.hpp"

namespace nlammr {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                       std::to_string(data.size()) + " values");
    }
    if (shape.size() > 2) throw ShapeError("tensor: rank > 2 unsupported: " + shape_str(shape));
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->data.size(), 0.0);
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({}, {v}, requires_grad);
  }

  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return from({n}, std::move(v), requires_grad);
  }

  // 1 x n row matrix.
  static Tensor row(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return from({1, n}, std::move(v), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                       bool requires_grad = false) {
    return from({rows, cols}, std::move(v), requires_grad);
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false) {
    std::vector<double> v;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw ShapeError("tensor: ragged matrix literal");
      v.insert(v.end(), r.begin(), r.end());
    }
    return from({rows.size(), cols}, std::move(v), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  // Matrix view: rank 0 -> 1x1, rank 1 (n) -> 1xn.
  std::size_t rows() const { return rank() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const {
    if (rank() == 0) return 1;
    return node_->shape.back();
  }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }

  double item() const {
    if (numel() != 1) throw ContractError("item: tensor " + shape_str(shape()) + " is not scalar");
    return node_->data[0];
  }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  std::vector<double> to_vector() const { return node_->data; }
  std::vector<double> row_values(std::size_t r) const {
    auto first = node_->data.begin() + static_cast<std::ptrdiff_t>(r * cols());
    return {first, first + static_cast<std::ptrdiff_t>(cols())};
  }

  void zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Value copy with no history and no gradient.
  Tensor detach() const { return from(shape(), node_->data, false); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  friend Tensor make_op_result(Shape, std::vector<double>, std::vector<Tensor>,
                               std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

// Builds an op output. History is recorded only when grad mode is on and at
// least one input requires a gradient.
inline Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                             std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.shared_node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

namespace detail {

// Gradient buffer of parent `i`, or nullptr when it does not take gradients.
inline double* pgrad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.grad.data() : nullptr;
}

inline const std::vector<double>& pdata(const Node& self, std::size_t i) {
  return self.parents[i]->data;
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() == 0) throw ShapeError(std::string(op) + ": expected a matrix, got a scalar");
}

}  // namespace detail

// Runs reverse-mode differentiation from a scalar loss.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  detail::Node* root = loss.node();
  if (!root->requires_grad) {
    throw ContractError("backward: loss does not depend on any tensor that requires grad");
  }

  // Iterative post-order DFS -> topological order (inputs before outputs).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

// c = a * b for a (m x k), b (k x n).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = ad[i * k + l];
      if (av == 0.0) continue;
      const double* brow = bd.data() + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return make_op_result({m, n}, std::move(c), {a, b}, [m, k, n](detail::Node& self) {
    const double* g = self.grad.data();
    const auto& A = detail::pdata(self, 0);
    const auto& B = detail::pdata(self, 1);
    if (double* ga = detail::pgrad(self, 0)) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
          const double* brow = B.data() + l * n;
          const double* grow = g + i * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + l] += s;
        }
      }
    }
    if (double* gb = detail::pgrad(self, 1)) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t l = 0; l < k; ++l) {
          const double av = A[i * k + l];
          if (av == 0.0) continue;
          double* gbrow = gb + l * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto ad = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = ad[i * n + j];
  return make_op_result({n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
    if (double* ga = detail::pgrad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {
inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = detail::pgrad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = detail::pgrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& A = detail::pdata(self, 0);
    const auto& B = detail::pdata(self, 1);
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * B[i];
    if (double* g = detail::pgrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * A[i];
  });
}

// a * factor + offset with constant factor and offset.
inline Tensor affine(const Tensor& a, double factor, double offset = 0.0) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor + offset;
  return make_op_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

inline Tensor scale(const Tensor& a, double factor) { return affine(a, factor, 0.0); }

// a * s where s is a one-element tensor (possibly learnable).
inline Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar: factor must hold one value, got " + shape_str(s.shape()));
  const double sv = s[0];
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * sv;
  return make_op_result(a.shape(), std::move(out), {a, s}, [sv](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * sv;
    if (double* g = detail::pgrad(self, 1)) {
      const auto& A = detail::pdata(self, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * A[i];
      g[0] += acc;
    }
  });
}

// Adds a bias row (numel == cols) to every row of a.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  detail::require_matrix(a, "add_bias");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.numel() != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match columns of " +
                     shape_str(a.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + bias[j];
  return make_op_result(a.shape(), std::move(out), {a, bias}, [m, n](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    if (double* g = detail::pgrad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  // NaN passes through so the training loop can still see it.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] <= 0.0 ? 0.0 : a[i];
  return make_op_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0)) {
      const auto& A = detail::pdata(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (A[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a[i]);
  return make_op_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double y = self.data[i];
        g[i] += self.grad[i] * y * (1.0 - y);
      }
  });
}

// log(max(a, floor)); the gradient is zero where the floor is active.
inline Tensor log_clamped(const Tensor& a, double floor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(a[i], floor));
  return make_op_result(a.shape(), std::move(out), {a}, [floor](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0)) {
      const auto& A = detail::pdata(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (A[i] > floor) g[i] += self.grad[i] / A[i];
    }
  });
}

// Inverted dropout: zeroes each entry with probability `rate` and rescales
// the survivors by 1/(1-rate).
inline Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.numel());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] = a[i] * mask[i];
  }
  return make_op_result(a.shape(), std::move(out), {a}, [mask = std::move(mask)](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalization

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op_result({}, {s}, {a}, [](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0)) {
      const double go = self.grad[0];
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += go;
    }
  });
}

// Column-wise mean over rows: (n x d) -> (1 x d).
inline Tensor mean_rows(const Tensor& a) {
  detail::require_matrix(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) throw ContractError("mean_rows: no rows to average");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a[i * n + j];
  for (double& v : out) v /= static_cast<double>(m);
  return make_op_result({1, n}, std::move(out), {a}, [m, n](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0)) {
      const double inv = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] * inv;
    }
  });
}

// Row-wise softmax of logits / sqrt(scale_dim). A rank-1 input is one row.
inline Tensor softmax_scaled(const Tensor& logits, std::size_t scale_dim) {
  if (scale_dim == 0) throw ContractError("softmax_scaled: scale_dim must be >= 1");
  if (logits.numel() == 0) throw ContractError("softmax_scaled: empty input");
  const std::size_t m = logits.rows(), n = logits.cols();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(scale_dim));
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = logits.data().data() + i * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp((x[j] - mx) * inv_scale);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_op_result(logits.shape(), std::move(out), {logits}, [m, n, inv_scale](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = self.data.data() + i * n;
        const double* gy = self.grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += inv_scale * y[j] * (gy[j] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Structural

// [a | b] for a (m x p), b (m x q).
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "concat_cols");
  detail::require_matrix(b, "concat_cols");
  const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
  if (b.rows() != m) {
    throw ShapeError("concat_cols: row counts differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * (p + q));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(b.data().data() + i * q, q, out.data() + i * (p + q) + p);
  }
  return make_op_result({m, p + q}, std::move(out), {a, b}, [m, p, q](detail::Node& self) {
    const std::size_t w = p + q;
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) g[i * p + j] += self.grad[i * w + j];
    if (double* g = detail::pgrad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < q; ++j) g[i * q + j] += self.grad[i * w + p + j];
  });
}

// Stacks k tensors of one row each (width d) into a (k x d) matrix.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: nothing to stack");
  const std::size_t d = rows.front().numel();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.numel() != d || r.rows() != 1) {
      throw ShapeError("stack_rows: expected rows of width " + std::to_string(d) + ", got " +
                       shape_str(r.shape()));
    }
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  const std::size_t k = rows.size();
  return make_op_result({k, d}, std::move(out), rows, [k, d](detail::Node& self) {
    for (std::size_t r = 0; r < k; ++r)
      if (double* g = detail::pgrad(self, r))
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
  });
}

// Copies rows a[idx[0]], a[idx[1]], ... into a new matrix.
inline Tensor gather_rows(const Tensor& a, std::vector<std::size_t> idx) {
  detail::require_matrix(a, "gather_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                       shape_str(a.shape()));
    }
    std::copy_n(a.data().data() + idx[r] * n, n, out.data() + r * n);
  }
  const std::size_t k = idx.size();
  return make_op_result({k, n}, std::move(out), {a}, [idx = std::move(idx), n](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
  });
}

// out[idx[r]] += a[r]; out has `out_rows` rows. Rows never targeted stay zero.
inline Tensor scatter_add_rows(const Tensor& a, std::vector<std::size_t> idx, std::size_t out_rows) {
  detail::require_matrix(a, "scatter_add_rows");
  const std::size_t n = a.cols();
  if (idx.size() != a.rows()) {
    throw ShapeError("scatter_add_rows: " + std::to_string(idx.size()) + " targets for " +
                     shape_str(a.shape()));
  }
  std::vector<double> out(out_rows * n, 0.0);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= out_rows) throw ShapeError("scatter_add_rows: target row out of range");
    for (std::size_t j = 0; j < n; ++j) out[idx[r] * n + j] += a[r * n + j];
  }
  return make_op_result({out_rows, n}, std::move(out), {a}, [idx = std::move(idx), n](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0))
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[idx[r] * n + j];
  });
}

// Sum over (i in pos, j in neg) of max(margin - (x_i - x_j), 0) for a flat
// tensor x.
inline Tensor pairwise_hinge(const Tensor& x, const std::vector<std::size_t>& pos,
                             const std::vector<std::size_t>& neg, double margin) {
  for (auto i : pos)
    if (i >= x.numel()) throw ShapeError("pairwise_hinge: positive index out of range");
  for (auto j : neg)
    if (j >= x.numel()) throw ShapeError("pairwise_hinge: negative index out of range");
  double s = 0.0;
  for (auto i : pos)
    for (auto j : neg) s += std::max(margin - (x[i] - x[j]), 0.0);
  return make_op_result({}, {s}, {x}, [pos, neg, margin](detail::Node& self) {
    if (double* g = detail::pgrad(self, 0)) {
      const auto& X = detail::pdata(self, 0);
      const double go = self.grad[0];
      for (auto i : pos)
        for (auto j : neg)
          if (margin - (X[i] - X[j]) > 0.0) {
            g[i] -= go;
            g[j] += go;
          }
    }
  });
}

}  // namespace nlammr
