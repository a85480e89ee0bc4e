// Copyright 2026 The tsptta Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode automatic differentiation over dense row-major
// float64 arrays. Only the primitives the policy network needs are provided.
//
// A Var is a handle to a graph node. Nodes are immutable once built; the
// graph is recorded only while gradients are enabled on the current thread
// and at least one input requires a gradient. Each forward pass builds a
// fresh graph; backward() sweeps it once and then releases it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tsptta/error.hpp"

namespace tsptta {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Leading extent for a matrix; 1 for a vector.
  std::size_t rows() const { return shape_.size() >= 2 ? size() / cols() : 1; }
  // Extent of the last axis.
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }

  double item() const {
    if (data_.size() != 1) {
      throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_shape() const {
    if (shape_.empty()) throw DimensionError("tensor shape must be non-empty");
    for (std::size_t d : shape_) {
      if (d == 0) throw DimensionError("tensor extents must be positive");
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  Tensor& grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::size_t size() const { return node_->value.size(); }

  // Accumulated gradient; zeros when backward() never reached this node.
  Tensor grad() const {
    return node_->grad.empty() ? Tensor(shape(), 0.0) : node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad = Tensor(); }

  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

// Leaf that receives gradients.
inline Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

// Leaf that never receives gradients.
inline Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

namespace detail {

// Wraps a freshly computed value into a node, recording parents and the
// backward rule only when some input needs a gradient.
inline Var make_result(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward = std::move(backward);
    }
  }
  return Var(std::move(n));
}

inline void require_rank2(const Var& v, const char* op) {
  if (v.shape().size() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         shape_string(v.shape()));
  }
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// out[m x n] += a[m x k] * b[k x n]
inline void gemm_nn(const double* a, const double* b, double* out,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += s * bp[j];
    }
  }
}

// out[m x k] += g[m x n] * b[k x n]^T
inline void gemm_nt(const double* g, const double* b, double* out,
                    std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    double* o = out + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      o[p] += acc;
    }
  }
}

// out[k x n] += a[m x k]^T * g[m x n]
inline void gemm_tn(const double* a, const double* g, double* out,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      double* o = out + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += s * gi[j];
    }
  }
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree " +
                         shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  Tensor out({m, n}, 0.0);
  detail::gemm_nn(a.value().data().data(), b.value().data().data(),
                  out.data().data(), m, k, n);
  return detail::make_result(std::move(out), {a.node(), b.node()},
                             [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data().data();
    if (pa.requires_grad) {
      detail::gemm_nt(g, pb.value.data().data(), pa.grad_buffer().data().data(),
                      m, n, k);
    }
    if (pb.requires_grad) {
      detail::gemm_tn(pa.value.data().data(), g, pb.grad_buffer().data().data(),
                      m, k, n);
    }
  });
}

// a * b^T without materialising the transpose.
inline Var matmul_nt(const Var& a, const Var& b) {
  detail::require_rank2(a, "matmul_nt");
  detail::require_rank2(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree " +
                         shape_string(a.shape()) + " * " +
                         shape_string(b.shape()) + "^T");
  }
  Tensor out({m, n}, 0.0);
  detail::gemm_nt(a.value().data().data(), b.value().data().data(),
                  out.data().data(), m, k, n);
  return detail::make_result(std::move(out), {a.node(), b.node()},
                             [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data().data();
    if (pa.requires_grad) {
      // dA[m x k] += G[m x n] * B[n x k]
      detail::gemm_nn(g, pb.value.data().data(), pa.grad_buffer().data().data(),
                      m, n, k);
    }
    if (pb.requires_grad) {
      // dB[n x k] += G^T[n x m] * A[m x k]
      detail::gemm_tn(g, pa.value.data().data(), pb.grad_buffer().data().data(),
                      m, n, k);
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return detail::make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto pg = p->grad_buffer().data();
      const auto g = self.grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
  });
}

// Adds a length-n vector to every row of an m x n matrix.
inline Var add_bias(const Var& a, const Var& bias) {
  const std::size_t n = a.cols();
  if (bias.size() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match last axis of " + shape_string(a.shape()));
  }
  Tensor out = a.value();
  const auto bv = bias.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i % n];
  return detail::make_result(std::move(out), {a.node(), bias.node()},
                             [n](Node& self) {
    const auto g = self.grad.data();
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto pg = pa.grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (pb.requires_grad) {
      auto pg = pb.grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i % n] += g[i];
    }
  });
}

// Elementwise product of equally shaped operands.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return detail::make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto g = self.grad.data();
    if (pa.requires_grad) {
      auto pg = pa.grad_buffer().data();
      const auto bv = pb.value.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * bv[i];
    }
    if (pb.requires_grad) {
      auto pg = pb.grad_buffer().data();
      const auto av = pa.value.data();
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * av[i];
    }
  });
}

inline Var mul_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return detail::make_result(std::move(out), {a.node()}, [s](Node& self) {
    auto pg = self.parents[0]->grad_buffer().data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += s * g[i];
  });
}

inline Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return detail::make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto pg = p.grad_buffer().data();
    const auto x = p.value.data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) pg[i] += g[i];
    }
  });
}

// Natural log; inputs must be positive.
inline Var log(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::log(v);
  return detail::make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto pg = p.grad_buffer().data();
    const auto x = p.value.data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] / x[i];
  });
}

inline Var transpose(const Var& a) {
  detail::require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = x(i, j);
  return detail::make_result(std::move(out), {a.node()}, [m, n](Node& self) {
    Tensor& pg = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) pg(i, j) += self.grad(j, i);
  });
}

inline Var sum(const Var& a) {
  const auto x = a.value().data();
  const double s = std::accumulate(x.begin(), x.end(), 0.0);
  return detail::make_result(Tensor::scalar(s), {a.node()}, [](Node& self) {
    const double g = self.grad[0];
    for (double& v : self.parents[0]->grad_buffer().data()) v += g;
  });
}

inline Var mean(const Var& a) {
  const auto x = a.value().data();
  const double count = static_cast<double>(x.size());
  const double s = std::accumulate(x.begin(), x.end(), 0.0) / count;
  return detail::make_result(Tensor::scalar(s), {a.node()}, [count](Node& self) {
    const double g = self.grad[0] / count;
    for (double& v : self.parents[0]->grad_buffer().data()) v += g;
  });
}

// Single element at a flat index, as a scalar node.
inline Var element(const Var& a, std::size_t index) {
  if (index >= a.size()) {
    throw DimensionError("element: index " + std::to_string(index) +
                         " out of range for " + shape_string(a.shape()));
  }
  return detail::make_result(Tensor::scalar(a.value()[index]), {a.node()},
                             [index](Node& self) {
    self.parents[0]->grad_buffer()[index] += self.grad[0];
  });
}

// Rows of a matrix (or elements of a vector, viewed as n x 1) by index.
inline Var gather_rows(const Var& a, std::vector<std::size_t> indices) {
  const std::size_t n = a.shape().size() >= 2 ? a.cols() : 1;
  const std::size_t m = a.size() / n;
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  for (std::size_t r : indices) {
    if (r >= m) {
      throw DimensionError("gather_rows: row " + std::to_string(r) +
                           " out of range for " + shape_string(a.shape()));
    }
  }
  Tensor out({indices.size(), n});
  const auto x = a.value().data();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(x.begin() + indices[i] * n, n, out.data().begin() + i * n);
  return detail::make_result(std::move(out), {a.node()},
                             [n, idx = std::move(indices)](Node& self) {
    auto pg = self.parents[0]->grad_buffer().data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) pg[idx[i] * n + j] += g[i * n + j];
  });
}

// Stacks matrices vertically (axis 0) or side by side (axis 1).
inline Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  for (const Var& p : parts) detail::require_rank2(p, "concat");
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (const Var& p : parts) parents.push_back(p.node());

  if (axis == 0) {
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    for (const Var& p : parts) {
      if (p.cols() != n) throw DimensionError("concat rows: column count mismatch");
      m += p.rows();
    }
    Tensor out({m, n});
    auto it = out.data().begin();
    for (const Var& p : parts) it = std::copy(p.value().data().begin(),
                                              p.value().data().end(), it);
    return detail::make_result(std::move(out), std::move(parents), [](Node& self) {
      std::size_t offset = 0;
      const auto g = self.grad.data();
      for (auto& p : self.parents) {
        const std::size_t sz = p->value.size();
        if (p->requires_grad) {
          auto pg = p->grad_buffer().data();
          for (std::size_t i = 0; i < sz; ++i) pg[i] += g[offset + i];
        }
        offset += sz;
      }
    });
  }
  if (axis == 1) {
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    for (const Var& p : parts) {
      if (p.rows() != m) throw DimensionError("concat cols: row count mismatch");
      n += p.cols();
    }
    Tensor out({m, n});
    std::size_t c0 = 0;
    for (const Var& p : parts) {
      const std::size_t w = p.cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out(i, c0 + j) = p.value()(i, j);
      c0 += w;
    }
    return detail::make_result(std::move(out), std::move(parents),
                               [m](Node& self) {
      std::size_t c = 0;
      for (auto& p : self.parents) {
        const std::size_t w = p->value.cols();
        if (p->requires_grad) {
          Tensor& pg = p->grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) pg(i, j) += self.grad(i, c + j);
        }
        c += w;
      }
    });
  }
  throw DimensionError("concat: axis must be 0 or 1");
}

// Columns [begin, begin + count) of a matrix.
inline Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  detail::require_rank2(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: range out of bounds for " +
                         shape_string(a.shape()));
  }
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a.value()(i, begin + j);
  return detail::make_result(std::move(out), {a.node()},
                             [m, begin, count](Node& self) {
    Tensor& pg = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) pg(i, begin + j) += self.grad(i, j);
  });
}

namespace detail {

inline Var softmax_impl(const Var& x, const std::vector<bool>* mask) {
  const std::size_t n = x.cols();
  const std::size_t m = x.size() / n;
  if (mask && mask->size() != n) {
    throw DimensionError("softmax: mask length " + std::to_string(mask->size()) +
                         " does not match " + shape_string(x.shape()));
  }
  auto masked = [&](std::size_t j) { return mask && (*mask)[j]; };
  Tensor out(x.shape(), 0.0);
  const auto xv = x.value().data();
  auto ov = out.data();
  for (std::size_t r = 0; r < m; ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!masked(j)) hi = std::max(hi, xv[r * n + j]);
    if (hi == -std::numeric_limits<double>::infinity()) {
      throw InvalidMaskError("softmax: every position is masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (masked(j)) continue;
      const double e = std::exp(xv[r * n + j] - hi);
      ov[r * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) ov[r * n + j] /= z;
  }
  return make_result(std::move(out), {x.node()}, [m, n](Node& self) {
    auto pg = self.parents[0]->grad_buffer().data();
    const auto p = self.value.data();
    const auto g = self.grad.data();
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += p[r * n + j] * g[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        pg[r * n + j] += p[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

}  // namespace detail

// Softmax along the last axis, independently per row.
inline Var softmax(const Var& x) { return detail::softmax_impl(x, nullptr); }

// Softmax along the last axis with masked positions (mask[j] == true) given
// probability exactly 0. At least one position must remain unmasked.
inline Var softmax(const Var& x, const std::vector<bool>& mask) {
  return detail::softmax_impl(x, &mask);
}

inline constexpr double kLayerNormEps = 1e-5;

// Normalises each row over the last axis, then applies gain and bias.
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
  const std::size_t d = x.cols();
  if (d < 2) throw DimensionError("layer_norm: last axis must have >= 2 entries");
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias must have length " +
                         std::to_string(d));
  }
  const std::size_t m = x.size() / d;
  Tensor out(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(m);
  const auto xv = x.value().data();
  const auto gv = gain.value().data();
  const auto bv = bias.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  return detail::make_result(
      std::move(out), {x.node(), gain.node(), bias.node()},
      [m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pgain = *self.parents[1];
        Node& pbias = *self.parents[2];
        const auto g = self.grad.data();
        const auto gv = pgain.value.data();
        if (pgain.requires_grad) {
          auto gg = pgain.grad_buffer().data();
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (pbias.requires_grad) {
          auto bg = pbias.grad_buffer().data();
          for (std::size_t i = 0; i < g.size(); ++i) bg[i % d] += g[i];
        }
        if (px.requires_grad) {
          auto xg = px.grad_buffer().data();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < m; ++r) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dy = g[r * d + j] * gv[j];
              sum_dy += dy;
              sum_dy_xhat += dy * xhat[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double dy = g[r * d + j] * gv[j];
              xg[r * d + j] += inv_std[r] *
                  (dy - inv_d * sum_dy - xhat[r * d + j] * inv_d * sum_dy_xhat);
            }
          }
        }
      });
}

// Reverse sweep from a scalar loss. Gradients accumulate into every reachable
// node that requires one; interior nodes release their parents afterwards.
inline void backward(const Var& loss) {
  if (loss.size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got " +
                            shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
    }
  }
}

}  // namespace tsptta
