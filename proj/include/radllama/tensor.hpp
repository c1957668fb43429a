// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "radllama/error.hpp"
#include "radllama/rng.hpp"

namespace radllama {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;
};

inline thread_local bool grad_mode = true;

inline std::vector<double>& grad_buffer(Node& n) {
  if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
  return n.grad;
}

[[noreturn]] inline void shape_mismatch(const char* op, const Shape& a,
                                        const Shape& b) {
  throw Error(ErrorKind::kShapeMismatch,
              std::string(op) + " " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense row-major double tensor with a reference-counted autodiff node.
/// Copies share the node; use detach() for an independent value copy.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (data.size() != shape_numel(shape)) {
      throw Error(ErrorKind::kShapeMismatch,
                  "data length " + std::to_string(data.size()) +
                      " for shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access; only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_data() { return node_->data; }

  double item() const {
    if (numel() != 1) {
      throw Error(ErrorKind::kNotScalar, "item() on " + shape_str(shape()));
    }
    return node_->data[0];
  }

  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t r, std::size_t c) const {
    return node_->data.at(r * node_->shape.back() + c);
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  Tensor detach() const {
    return Tensor(node_->shape, node_->data, false);
  }

  /// Reverse-mode sweep from this scalar. Leaf grads accumulate across calls.
  void backward() const;

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> data,
                          std::initializer_list<const Tensor*> inputs,
                          std::function<void(Node&)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!grad_mode) return out;
  bool any = false;
  for (const Tensor* t : inputs) any = any || t->requires_grad();
  if (!any) return out;
  Node& n = out.node();
  n.requires_grad = true;
  n.is_leaf = false;
  for (const Tensor* t : inputs) n.parents.push_back(t->node_ptr());
  n.backward = std::move(backward);
  return out;
}

inline Tensor make_result(Shape shape, std::vector<double> data,
                          const std::vector<Tensor>& inputs,
                          std::function<void(Node&)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!grad_mode) return out;
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  Node& n = out.node();
  n.requires_grad = true;
  n.is_leaf = false;
  for (const Tensor& t : inputs) n.parents.push_back(t.node_ptr());
  n.backward = std::move(backward);
  return out;
}

}  // namespace detail

inline void Tensor::backward() const {
  if (numel() != 1) {
    throw Error(ErrorKind::kNotScalar,
                "backward() on " + shape_str(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->data.size(), 0.0);
  }
  detail::grad_buffer(*node_)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->is_leaf && n->backward) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Raw kernels over contiguous row-major buffers.

namespace kernels {

/// c[m,n] += a[m,k] * b[k,n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

/// c[m,n] += a[m,k] * b[n,k]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

/// c[m,n] += a[k,m]^T * b[k,n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Differentiable operations.

inline constexpr double kRmsNormEps = 1e-6;

/// [m,k] x [k,n] -> [m,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    detail::shape_mismatch("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return detail::make_result({m, n}, std::move(out), {&a, &b},
                             [m, k, n](detail::Node& self) {
    detail::Node& na = *self.parents[0];
    detail::Node& nb = *self.parents[1];
    if (na.requires_grad) {
      kernels::gemm_nt(self.grad.data(), nb.data.data(),
                       detail::grad_buffer(na).data(), m, n, k);
    }
    if (nb.requires_grad) {
      kernels::gemm_tn(na.data.data(), self.grad.data(),
                       detail::grad_buffer(nb).data(), k, m, n);
    }
  });
}

/// [m,k] x [n,k]^T -> [m,n]. The linear-layer form with weights [out, in].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    detail::shape_mismatch("matmul_nt", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return detail::make_result({m, n}, std::move(out), {&a, &b},
                             [m, k, n](detail::Node& self) {
    detail::Node& na = *self.parents[0];
    detail::Node& nb = *self.parents[1];
    if (na.requires_grad) {
      kernels::gemm_nn(self.grad.data(), nb.data.data(),
                       detail::grad_buffer(na).data(), m, n, k);
    }
    if (nb.requires_grad) {
      kernels::gemm_tn(self.grad.data(), na.data.data(),
                       detail::grad_buffer(nb).data(), n, m, k);
    }
  });
}

namespace detail {

// b broadcasts against a when b's shape equals a's trailing dimensions.
inline std::size_t broadcast_inner(const char* op, const Tensor& a,
                                   const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    shape_mismatch(op, sa, sb);
  }
  return b.numel();
}

}  // namespace detail

/// Elementwise sum; `b` may broadcast over leading axes of `a`.
inline Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t inner = detail::broadcast_inner("add", a, b);
  const auto da = a.data();
  const auto db = b.data();
  std::vector<double> out(da.begin(), da.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += db[i % inner];
  return detail::make_result(a.shape(), std::move(out), {&a, &b},
                             [inner](detail::Node& self) {
    detail::Node& na = *self.parents[0];
    detail::Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& g = detail::grad_buffer(na);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = detail::grad_buffer(nb);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g[i % inner] += self.grad[i];
      }
    }
  });
}

/// Elementwise (Hadamard) product; `b` may broadcast over leading axes.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t inner = detail::broadcast_inner("mul", a, b);
  const auto da = a.data();
  const auto db = b.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i % inner];
  return detail::make_result(a.shape(), std::move(out), {&a, &b},
                             [inner](detail::Node& self) {
    detail::Node& na = *self.parents[0];
    detail::Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& g = detail::grad_buffer(na);
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * nb.data[i % inner];
      }
    }
    if (nb.requires_grad) {
      auto& g = detail::grad_buffer(nb);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        g[i % inner] += self.grad[i] * na.data[i];
      }
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  const auto da = a.data();
  std::vector<double> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * s;
  return detail::make_result(a.shape(), std::move(out), {&a},
                             [s](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

inline Tensor sum(const Tensor& a) {
  const auto da = a.data();
  double s = 0.0;
  for (double v : da) s += v;
  return detail::make_result({}, {s}, {&a}, [](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.parents[0]);
    const double up = self.grad[0];
    for (double& v : g) v += up;
  });
}

inline Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

/// Softmax over the last axis. Entries equal to -inf receive probability 0.
inline Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) detail::shape_mismatch("softmax", x.shape(), {1});
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  const auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = dx.data() + r * cols;
    double* yi = out.data() + r * cols;
    const double mx = *std::max_element(xi, xi + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      yi[c] = std::exp(xi[c] - mx);
      z += yi[c];
    }
    const double inv = 1.0 / z;
    for (std::size_t c = 0; c < cols; ++c) yi[c] *= inv;
  }
  return detail::make_result(x.shape(), std::move(out), {&x},
                             [rows, cols](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.parents[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * cols;
      const double* dy = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
      double* gx = g.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) gx[c] += y[c] * (dy[c] - dot);
    }
  });
}

/// Sets entries above the diagonal of a square [T,T] matrix to -inf.
inline Tensor causal_mask(const Tensor& x) {
  if (x.rank() != 2 || x.dim(0) != x.dim(1)) {
    detail::shape_mismatch("causal_mask", x.shape(), {x.dim(0), x.dim(0)});
  }
  const std::size_t t = x.dim(0);
  const auto dx = x.data();
  std::vector<double> out(dx.begin(), dx.end());
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = i + 1; j < t; ++j) {
      out[i * t + j] = -std::numeric_limits<double>::infinity();
    }
  }
  return detail::make_result(x.shape(), std::move(out), {&x},
                             [t](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.parents[0]);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j <= i; ++j) g[i * t + j] += self.grad[i * t + j];
    }
  });
}

/// x / sqrt(mean(x^2) + 1e-6) over the last axis. No gain; compose with mul.
inline Tensor rms_norm(const Tensor& x) {
  if (x.rank() == 0) detail::shape_mismatch("rms_norm", x.shape(), {1});
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  const auto dx = x.data();
  std::vector<double> out(dx.size());
  std::vector<double> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = dx.data() + r * cols;
    double ms = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ms += xi[c] * xi[c];
    ms /= static_cast<double>(cols);
    inv[r] = 1.0 / std::sqrt(ms + kRmsNormEps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xi[c] * inv[r];
  }
  return detail::make_result(
      x.shape(), std::move(out), {&x},
      [rows, cols, inv = std::move(inv)](detail::Node& self) {
        detail::Node& nx = *self.parents[0];
        auto& g = detail::grad_buffer(nx);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xi = nx.data.data() + r * cols;
          const double* dy = self.grad.data() + r * cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * xi[c];
          const double s = inv[r];
          const double k = s * s * s * dot / static_cast<double>(cols);
          double* gx = g.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) gx[c] += s * dy[c] - k * xi[c];
        }
      });
}

/// x * sigmoid(x)
inline Tensor silu(const Tensor& x) {
  const auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = dx[i] / (1.0 + std::exp(-dx[i]));
  }
  return detail::make_result(x.shape(), std::move(out), {&x},
                             [](detail::Node& self) {
    detail::Node& nx = *self.parents[0];
    auto& g = detail::grad_buffer(nx);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = nx.data[i];
      const double sg = 1.0 / (1.0 + std::exp(-v));
      g[i] += self.grad[i] * sg * (1.0 + v * (1.0 - sg));
    }
  });
}

/// Gathers rows of table [V,d] -> [ids.size(), d].
inline Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) {
    detail::shape_mismatch("embedding", table.shape(), {0, 0});
  }
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  const auto dt = table.data();
  std::vector<double> out(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab) {
      throw Error(ErrorKind::kInvalidId, "token " + std::to_string(ids[t]) +
                                             " outside vocab of " +
                                             std::to_string(vocab));
    }
    std::copy_n(dt.data() + ids[t] * d, d, out.data() + t * d);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return detail::make_result(
      {ids.size(), d}, std::move(out), {&table},
      [d, saved = std::move(saved)](detail::Node& self) {
        auto& g = detail::grad_buffer(*self.parents[0]);
        for (std::size_t t = 0; t < saved.size(); ++t) {
          double* row = g.data() + saved[t] * d;
          const double* up = self.grad.data() + t * d;
          for (std::size_t c = 0; c < d; ++c) row[c] += up[c];
        }
      });
}

inline Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) detail::shape_mismatch("transpose", x.shape(), {0, 0});
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = dx[i * c + j];
  }
  return detail::make_result({c, r}, std::move(out), {&x},
                             [r, c](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.parents[0]);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

namespace detail {

struct AxisSplit {
  std::size_t outer, len, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit a{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace detail

/// Concatenates along `axis`; all other dimensions must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "concat of zero tensors");
  }
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) detail::shape_mismatch("concat", s0, s0);
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) detail::shape_mismatch("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) detail::shape_mismatch("concat", s0, s);
    }
    out_shape[axis] += s[axis];
  }
  const auto dst = detail::split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const auto src = detail::split_axis(p.shape(), axis);
    const auto dp = p.data();
    const std::size_t chunk = src.len * src.inner;
    for (std::size_t o = 0; o < src.outer; ++o) {
      std::copy_n(dp.data() + o * chunk, chunk,
                  out.data() + o * dst.len * dst.inner + off * dst.inner);
    }
    off += src.len;
  }
  return detail::make_result(
      out_shape, std::move(out), parts,
      [dst, offsets = std::move(offsets)](detail::Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          detail::Node& np = *self.parents[k];
          if (!np.requires_grad) continue;
          auto& g = detail::grad_buffer(np);
          const std::size_t chunk = g.size() / dst.outer;
          for (std::size_t o = 0; o < dst.outer; ++o) {
            const double* up = self.grad.data() + o * dst.len * dst.inner +
                               offsets[k] * dst.inner;
            double* gp = g.data() + o * chunk;
            for (std::size_t i = 0; i < chunk; ++i) gp[i] += up[i];
          }
        }
      });
}

/// Half-open range [begin, end) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
                    std::size_t end) {
  if (axis >= x.rank() || begin > end || end > x.dim(axis)) {
    throw Error(ErrorKind::kShapeMismatch,
                "slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") on axis " + std::to_string(axis) + " of " +
                    shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const auto src = detail::split_axis(x.shape(), axis);
  const std::size_t len = end - begin;
  const auto dx = x.data();
  std::vector<double> out(src.outer * len * src.inner);
  for (std::size_t o = 0; o < src.outer; ++o) {
    std::copy_n(dx.data() + (o * src.len + begin) * src.inner, len * src.inner,
                out.data() + o * len * src.inner);
  }
  return detail::make_result(out_shape, std::move(out), {&x},
                             [src, begin, len](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.parents[0]);
    for (std::size_t o = 0; o < src.outer; ++o) {
      double* gp = g.data() + (o * src.len + begin) * src.inner;
      const double* up = self.grad.data() + o * len * src.inner;
      for (std::size_t i = 0; i < len * src.inner; ++i) gp[i] += up[i];
    }
  });
}

/// Rotary position embedding on [T, n_heads * head_dim], rotating adjacent
/// pairs (2i, 2i+1) of each head by pos * base^(-2i / head_dim).
inline Tensor rope(const Tensor& x, std::size_t n_heads, double base = 10000.0) {
  if (x.rank() != 2 || n_heads == 0 || x.dim(1) % n_heads != 0 ||
      (x.dim(1) / n_heads) % 2 != 0) {
    throw Error(ErrorKind::kShapeMismatch,
                "rope on " + shape_str(x.shape()) + " with " +
                    std::to_string(n_heads) + " heads");
  }
  const std::size_t t = x.dim(0), d = x.dim(1), hd = d / n_heads;
  std::vector<double> cosv(t * hd / 2), sinv(t * hd / 2);
  for (std::size_t p = 0; p < t; ++p) {
    for (std::size_t i = 0; i < hd / 2; ++i) {
      const double freq = std::pow(base, -2.0 * static_cast<double>(i) /
                                             static_cast<double>(hd));
      const double ang = static_cast<double>(p) * freq;
      cosv[p * hd / 2 + i] = std::cos(ang);
      sinv[p * hd / 2 + i] = std::sin(ang);
    }
  }
  const auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t p = 0; p < t; ++p) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t i = 0; i < hd / 2; ++i) {
        const std::size_t j = p * d + h * hd + 2 * i;
        const double c = cosv[p * hd / 2 + i], s = sinv[p * hd / 2 + i];
        out[j] = dx[j] * c - dx[j + 1] * s;
        out[j + 1] = dx[j] * s + dx[j + 1] * c;
      }
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {&x},
      [t, d, hd, n_heads, cosv = std::move(cosv),
       sinv = std::move(sinv)](detail::Node& self) {
        auto& g = detail::grad_buffer(*self.parents[0]);
        for (std::size_t p = 0; p < t; ++p) {
          for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t i = 0; i < hd / 2; ++i) {
              const std::size_t j = p * d + h * hd + 2 * i;
              const double c = cosv[p * hd / 2 + i], s = sinv[p * hd / 2 + i];
              g[j] += self.grad[j] * c + self.grad[j + 1] * s;
              g[j + 1] += -self.grad[j] * s + self.grad[j + 1] * c;
            }
          }
        }
      });
}

/// Inverted dropout. The mask is drawn from `rng`, so a copied generator
/// reproduces the same mask.
inline Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.uniform() >= p ? keep : 0.0;
  Tensor m(x.shape(), std::move(mask));
  return mul(x, m);
}

/// Mean token cross-entropy over positions where mask is set.
/// logits [T,V]; targets and mask have length T.
inline Tensor masked_cross_entropy(const Tensor& logits,
                                   std::span<const int> targets,
                                   std::span<const std::uint8_t> mask) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size() ||
      targets.size() != mask.size()) {
    detail::shape_mismatch("masked_cross_entropy", logits.shape(),
                           {targets.size(), mask.size()});
  }
  const std::size_t t = logits.dim(0), v = logits.dim(1);
  std::size_t count = 0;
  for (auto m : mask) count += m ? 1 : 0;
  if (count == 0) {
    throw Error(ErrorKind::kEmptyMask, "no response positions in mask");
  }
  const auto dl = logits.data();
  std::vector<double> probs(t * v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw Error(ErrorKind::kInvalidId,
                  "target " + std::to_string(targets[i]) + " at " +
                      std::to_string(i));
    }
    const double* row = dl.data() + i * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[targets[i]];
    for (std::size_t c = 0; c < v; ++c) probs[i * v + c] = std::exp(row[c] - lse);
  }
  const double inv_count = 1.0 / static_cast<double>(count);
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<std::uint8_t> mk(mask.begin(), mask.end());
  return detail::make_result(
      {}, {total * inv_count}, {&logits},
      [t, v, inv_count, probs = std::move(probs), tg = std::move(tg),
       mk = std::move(mk)](detail::Node& self) {
        auto& g = detail::grad_buffer(*self.parents[0]);
        const double up = self.grad[0] * inv_count;
        for (std::size_t i = 0; i < t; ++i) {
          if (!mk[i]) continue;
          for (std::size_t c = 0; c < v; ++c) g[i * v + c] += up * probs[i * v + c];
          g[i * v + tg[i]] -= up;
        }
      });
}

// ---------------------------------------------------------------------------
// Seeded initialization.

struct InitDist {
  enum class Kind { kZeros, kNormal, kUniform };
  Kind kind = Kind::kZeros;
  double a = 0.0;  // mean or lower bound
  double b = 0.0;  // stddev or upper bound

  static InitDist zeros() { return {}; }
  static InitDist normal(double mean, double stddev) {
    return {Kind::kNormal, mean, stddev};
  }
  static InitDist uniform(double lo, double hi) {
    return {Kind::kUniform, lo, hi};
  }
};

inline Tensor seeded_init(Shape shape, const InitDist& dist, Rng& rng,
                          bool requires_grad = false) {
  std::vector<double> d(shape_numel(shape), 0.0);
  switch (dist.kind) {
    case InitDist::Kind::kZeros:
      break;
    case InitDist::Kind::kNormal:
      for (double& v : d) v = rng.normal(dist.a, dist.b);
      break;
    case InitDist::Kind::kUniform:
      for (double& v : d) v = rng.uniform(dist.a, dist.b);
      break;
  }
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

}  // namespace radllama
