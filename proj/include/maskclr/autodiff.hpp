// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode tape. Ops compute eagerly; when recording is on and an input
// participates in the gradient chain, a backward closure is pushed. backward()
// replays the closures in reverse execution order, accumulating gradients
// additively across fan-out.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/tensor.hpp"

namespace maskclr {

namespace detail {

// Decomposition of a shape around one axis: iterate (outer, inner) pairs and
// walk the axis with stride `inner`.
struct AxisView {
  std::int64_t outer = 1, len = 1, inner = 1;
};

inline AxisView axis_view(const Shape& s, int axis) {
  if (axis < 0) axis += int(s.size());
  if (axis < 0 || axis >= int(s.size())) throw ShapeError("axis out of range for " + shape_str(s));
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= s[std::size_t(i)];
  v.len = s[std::size_t(axis)];
  for (int i = axis + 1; i < int(s.size()); ++i) v.inner *= s[std::size_t(i)];
  return v;
}

inline Shape drop_axis(const Shape& s, int axis) {
  if (axis < 0) axis += int(s.size());
  Shape out;
  for (int i = 0; i < int(s.size()); ++i)
    if (i != axis) out.push_back(s[std::size_t(i)]);
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace detail

// Running statistics of a batch_norm layer. Mutated in train mode; plain
// buffers, never differentiated.
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormState(std::int64_t features = 0)
      : running_mean(std::size_t(features), T(0)), running_var(std::size_t(features), T(1)) {}
};

template <typename T>
class Tape {
 public:
  bool recording = true;
  bool check_finite = false;  // post-op NaN/Inf scan, for tests

  // --- infrastructure ---------------------------------------------------------

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  void backward(const TensorPtr<T>& loss) {
    if (loss->numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  // --- elementwise -------------------------------------------------------------

  TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same("add", a, b);
    auto out = fresh(a->shape, {a, b});
    for (std::int64_t i = 0; i < a->numel(); ++i)
      out->value[std::size_t(i)] = a->value[std::size_t(i)] + b->value[std::size_t(i)];
    record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
      }
    });
    return out;
  }

  TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same("sub", a, b);
    auto out = fresh(a->shape, {a, b});
    for (std::int64_t i = 0; i < a->numel(); ++i)
      out->value[std::size_t(i)] = a->value[std::size_t(i)] - b->value[std::size_t(i)];
    record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] -= out->grad[i];
      }
    });
    return out;
  }

  TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    require_same("mul", a, b);
    auto out = fresh(a->shape, {a, b});
    for (std::int64_t i = 0; i < a->numel(); ++i)
      out->value[std::size_t(i)] = a->value[std::size_t(i)] * b->value[std::size_t(i)];
    record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i] * a->value[i];
      }
    });
    return out;
  }

  TensorPtr<T> scale(const TensorPtr<T>& a, T s) {
    auto out = fresh(a->shape, {a});
    for (std::int64_t i = 0; i < a->numel(); ++i) out->value[std::size_t(i)] = a->value[std::size_t(i)] * s;
    record(out, [a, out, s] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * s;
    });
    return out;
  }

  // (..., F) + (F): the only broadcast pattern supported.
  TensorPtr<T> add_bias(const TensorPtr<T>& a, const TensorPtr<T>& bias) {
    if (bias->rank() != 1 || a->dim(-1) != bias->dim(0))
      throw ShapeError("add_bias: " + shape_str(a->shape) + " vs " + shape_str(bias->shape));
    const std::int64_t f = bias->dim(0), rows = a->numel() / f;
    auto out = fresh(a->shape, {a, bias});
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t j = 0; j < f; ++j)
        out->value[std::size_t(r * f + j)] = a->value[std::size_t(r * f + j)] + bias->value[std::size_t(j)];
    record(out, [a, bias, out, rows, f] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        for (std::int64_t j = 0; j < f; ++j) {
          double acc = 0.0;
          for (std::int64_t r = 0; r < rows; ++r) acc += double(out->grad[std::size_t(r * f + j)]);
          bias->grad[std::size_t(j)] += T(acc);
        }
      }
    });
    return out;
  }

  TensorPtr<T> relu(const TensorPtr<T>& a) {
    auto out = fresh(a->shape, {a});
    for (std::int64_t i = 0; i < a->numel(); ++i)
      out->value[std::size_t(i)] = a->value[std::size_t(i)] > T(0) ? a->value[std::size_t(i)] : T(0);
    record(out, [a, out] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i)
        if (a->value[i] > T(0)) a->grad[i] += out->grad[i];
    });
    return out;
  }

  // tanh-approximation gelu.
  TensorPtr<T> gelu(const TensorPtr<T>& a) {
    auto out = fresh(a->shape, {a});
    const double c = std::sqrt(2.0 / M_PI), k = 0.044715;
    for (std::int64_t i = 0; i < a->numel(); ++i) {
      const double x = double(a->value[std::size_t(i)]);
      const double t = std::tanh(c * (x + k * x * x * x));
      out->value[std::size_t(i)] = T(0.5 * x * (1.0 + t));
    }
    record(out, [a, out, c, k] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        const double x = double(a->value[i]);
        const double t = std::tanh(c * (x + k * x * x * x));
        const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
        a->grad[i] += T(double(out->grad[i]) * d);
      }
    });
    return out;
  }

  TensorPtr<T> log(const TensorPtr<T>& a) {
    auto out = fresh(a->shape, {a});
    for (std::int64_t i = 0; i < a->numel(); ++i)
      out->value[std::size_t(i)] = T(std::log(double(a->value[std::size_t(i)])));
    record(out, [a, out] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i)
        a->grad[i] += T(double(out->grad[i]) / double(a->value[i]));
    });
    return out;
  }

  TensorPtr<T> exp(const TensorPtr<T>& a) {
    auto out = fresh(a->shape, {a});
    for (std::int64_t i = 0; i < a->numel(); ++i)
      out->value[std::size_t(i)] = T(std::exp(double(a->value[std::size_t(i)])));
    record(out, [a, out] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i)
        a->grad[i] += out->grad[i] * out->value[i];
    });
    return out;
  }

  // --- linear algebra ----------------------------------------------------------

  TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(0))
      throw ShapeError("matmul: " + shape_str(a->shape) + " x " + shape_str(b->shape));
    const std::int64_t m = a->dim(0), k = a->dim(1), n = b->dim(1);
    auto out = fresh({m, n}, {a, b});
    kernels::mm_nn(a->value.data(), b->value.data(), out->value.data(), m, k, n, false);
    record(out, [a, b, out, m, k, n] {
      if (a->requires_grad) {
        a->ensure_grad();
        std::vector<T> bt(static_cast<std::size_t>(k * n));
        kernels::transpose_2d(b->value.data(), bt.data(), k, n);
        kernels::mm_nn(out->grad.data(), bt.data(), a->grad.data(), m, n, k, true);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        std::vector<T> at(static_cast<std::size_t>(m * k));
        kernels::transpose_2d(a->value.data(), at.data(), m, k);
        kernels::mm_nn(at.data(), out->grad.data(), b->grad.data(), k, m, n, true);
      }
    });
    return out;
  }

  // Batched matmul (N,m,k) @ (N,k,n); with transB set, b is (N,n,k) and each
  // item is multiplied by its transpose (attention-score form).
  TensorPtr<T> bmm(const TensorPtr<T>& a, const TensorPtr<T>& b, bool transB = false) {
    if (a->rank() != 3 || b->rank() != 3 || a->dim(0) != b->dim(0) ||
        a->dim(2) != (transB ? b->dim(2) : b->dim(1)))
      throw ShapeError("bmm: " + shape_str(a->shape) + " x " + shape_str(b->shape));
    const std::int64_t N = a->dim(0), m = a->dim(1), k = a->dim(2);
    const std::int64_t n = transB ? b->dim(1) : b->dim(2);
    auto out = fresh({N, m, n}, {a, b});
    const T* av = a->value.data();
    const T* bv = b->value.data();
    T* ov = out->value.data();
    parallel_for(N, 1, [&](std::int64_t i0, std::int64_t i1) {
      std::vector<T> bt;
      for (std::int64_t i = i0; i < i1; ++i) {
        const T* bi = bv + i * k * n;
        if (transB) {
          bt.resize(std::size_t(k * n));
          kernels::transpose_2d(bi, bt.data(), n, k);
          bi = bt.data();
        }
        kernels::mm_nn(av + i * m * k, bi, ov + i * m * n, m, k, n, false);
      }
    });
    record(out, [a, b, out, N, m, k, n, transB] {
      if (a->requires_grad) {
        a->ensure_grad();
        parallel_for(N, 1, [&](std::int64_t i0, std::int64_t i1) {
          std::vector<T> scratch;
          for (std::int64_t i = i0; i < i1; ++i) {
            const T* g = out->grad.data() + i * m * n;
            const T* bi = b->value.data() + i * k * n;
            // dA = dC @ B^T, or dC @ B when B was already transposed
            if (transB) {
              kernels::mm_nn(g, bi, a->grad.data() + i * m * k, m, n, k, true);
            } else {
              scratch.resize(std::size_t(k * n));
              kernels::transpose_2d(bi, scratch.data(), k, n);
              kernels::mm_nn(g, scratch.data(), a->grad.data() + i * m * k, m, n, k, true);
            }
          }
        });
      }
      if (b->requires_grad) {
        b->ensure_grad();
        parallel_for(N, 1, [&](std::int64_t i0, std::int64_t i1) {
          std::vector<T> at(static_cast<std::size_t>(m * k)), gt;
          for (std::int64_t i = i0; i < i1; ++i) {
            const T* g = out->grad.data() + i * m * n;
            const T* ai = a->value.data() + i * m * k;
            if (transB) {
              // C = A B^T -> dB = dC^T @ A
              gt.resize(std::size_t(m * n));
              kernels::transpose_2d(g, gt.data(), m, n);
              kernels::mm_nn(gt.data(), ai, b->grad.data() + i * n * k, n, m, k, true);
            } else {
              kernels::transpose_2d(ai, at.data(), m, k);
              kernels::mm_nn(at.data(), g, b->grad.data() + i * k * n, k, m, n, true);
            }
          }
        });
      }
    });
    return out;
  }

  TensorPtr<T> transpose(const TensorPtr<T>& a) {
    if (a->rank() != 2) throw ShapeError("transpose: rank-2 required, got " + shape_str(a->shape));
    const std::int64_t m = a->dim(0), n = a->dim(1);
    auto out = fresh({n, m}, {a});
    kernels::transpose_2d(a->value.data(), out->value.data(), m, n);
    record(out, [a, out, m, n] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j)
          a->grad[std::size_t(j * n + i)] += out->grad[std::size_t(i * m + j)];
    });
    return out;
  }

  TensorPtr<T> reshape(const TensorPtr<T>& a, Shape shape) {
    if (shape_numel(shape) != a->numel())
      throw ShapeError("reshape: " + shape_str(a->shape) + " -> " + shape_str(shape));
    auto out = fresh(std::move(shape), {a});
    out->value = a->value;
    record(out, [a, out] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
    });
    return out;
  }

  TensorPtr<T> concat(const std::vector<TensorPtr<T>>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const int rank = parts[0]->rank();
    if (axis < 0) axis += rank;
    Shape out_shape = parts[0]->shape;
    std::int64_t total = 0;
    for (const auto& p : parts) {
      if (p->rank() != rank) throw ShapeError("concat: rank mismatch");
      for (int i = 0; i < rank; ++i)
        if (i != axis && p->shape[std::size_t(i)] != out_shape[std::size_t(i)])
          throw ShapeError("concat: " + shape_str(p->shape) + " vs " + shape_str(out_shape));
      total += p->dim(axis);
    }
    out_shape[std::size_t(axis)] = total;

    std::vector<TensorPtr<T>> ins(parts.begin(), parts.end());
    auto out = fresh(out_shape, ins);
    const auto ov = detail::axis_view(out_shape, axis);
    std::int64_t offset = 0;
    for (const auto& p : parts) {
      const std::int64_t len = p->dim(axis);
      for (std::int64_t o = 0; o < ov.outer; ++o)
        std::copy_n(p->value.data() + o * len * ov.inner, len * ov.inner,
                    out->value.data() + (o * ov.len + offset) * ov.inner);
      offset += len;
    }
    record(out, [ins, out, ov, axis] {
      std::int64_t off = 0;
      for (const auto& p : ins) {
        const std::int64_t len = p->dim(axis);
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::int64_t o = 0; o < ov.outer; ++o) {
            const T* src = out->grad.data() + (o * ov.len + off) * ov.inner;
            T* dst = p->grad.data() + o * len * ov.inner;
            for (std::int64_t i = 0; i < len * ov.inner; ++i) dst[i] += src[i];
          }
        }
        off += len;
      }
    });
    return out;
  }

  // Rows [begin, end) along axis 0.
  TensorPtr<T> slice_rows(const TensorPtr<T>& a, std::int64_t begin, std::int64_t end) {
    if (begin < 0 || end > a->dim(0) || begin >= end)
      throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                       ") of " + shape_str(a->shape));
    Shape out_shape = a->shape;
    out_shape[0] = end - begin;
    const std::int64_t row = a->numel() / a->dim(0);
    auto out = fresh(out_shape, {a});
    std::copy_n(a->value.data() + begin * row, (end - begin) * row, out->value.data());
    record(out, [a, out, begin, row] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      T* dst = a->grad.data() + begin * row;
      for (std::size_t i = 0; i < out->grad.size(); ++i) dst[i] += out->grad[i];
    });
    return out;
  }

  TensorPtr<T> gather_rows(const TensorPtr<T>& a, std::vector<std::int64_t> idx) {
    if (a->rank() < 1) throw ShapeError("gather_rows: rank >= 1 required");
    const std::int64_t rows = a->dim(0), row = a->numel() / rows;
    for (std::int64_t i : idx)
      if (i < 0 || i >= rows) throw std::out_of_range("gather_rows: index " + std::to_string(i));
    Shape out_shape = a->shape;
    out_shape[0] = std::int64_t(idx.size());
    auto out = fresh(out_shape, {a});
    for (std::size_t r = 0; r < idx.size(); ++r)
      std::copy_n(a->value.data() + idx[r] * row, row, out->value.data() + std::int64_t(r) * row);
    record(out, [a, out, idx = std::move(idx), row] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const T* src = out->grad.data() + std::int64_t(r) * row;
        T* dst = a->grad.data() + idx[r] * row;
        for (std::int64_t i = 0; i < row; ++i) dst[i] += src[i];
      }
    });
    return out;
  }

  // (B,V,H*Dh) -> (B*H,V,Dh)
  TensorPtr<T> split_heads(const TensorPtr<T>& a, int heads) {
    if (a->rank() != 3 || a->dim(2) % heads != 0)
      throw ShapeError("split_heads: " + shape_str(a->shape) + " with heads=" + std::to_string(heads));
    const std::int64_t B = a->dim(0), V = a->dim(1), D = a->dim(2), Dh = D / heads;
    auto out = fresh({B * heads, V, Dh}, {a});
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t v = 0; v < V; ++v)
        for (std::int64_t h = 0; h < heads; ++h)
          std::copy_n(a->value.data() + (b * V + v) * D + h * Dh, Dh,
                      out->value.data() + ((b * heads + h) * V + v) * Dh);
    record(out, [a, out, B, V, D, Dh, heads] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t v = 0; v < V; ++v)
          for (std::int64_t h = 0; h < heads; ++h) {
            const T* src = out->grad.data() + ((b * heads + h) * V + v) * Dh;
            T* dst = a->grad.data() + (b * V + v) * D + h * Dh;
            for (std::int64_t i = 0; i < Dh; ++i) dst[i] += src[i];
          }
    });
    return out;
  }

  // (B*H,V,Dh) -> (B,V,H*Dh)
  TensorPtr<T> merge_heads(const TensorPtr<T>& a, int heads) {
    if (a->rank() != 3 || a->dim(0) % heads != 0)
      throw ShapeError("merge_heads: " + shape_str(a->shape) + " with heads=" + std::to_string(heads));
    const std::int64_t B = a->dim(0) / heads, V = a->dim(1), Dh = a->dim(2), D = Dh * heads;
    auto out = fresh({B, V, D}, {a});
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t v = 0; v < V; ++v)
        for (std::int64_t h = 0; h < heads; ++h)
          std::copy_n(a->value.data() + ((b * heads + h) * V + v) * Dh, Dh,
                      out->value.data() + (b * V + v) * D + h * Dh);
    record(out, [a, out, B, V, D, Dh, heads] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t v = 0; v < V; ++v)
          for (std::int64_t h = 0; h < heads; ++h) {
            const T* src = out->grad.data() + (b * V + v) * D + h * Dh;
            T* dst = a->grad.data() + ((b * heads + h) * V + v) * Dh;
            for (std::int64_t i = 0; i < Dh; ++i) dst[i] += src[i];
          }
    });
    return out;
  }

  // --- reductions & normalizations ----------------------------------------------

  TensorPtr<T> softmax(const TensorPtr<T>& a, int axis) { return softmax_impl(a, axis, false); }
  TensorPtr<T> log_softmax(const TensorPtr<T>& a, int axis) { return softmax_impl(a, axis, true); }

  TensorPtr<T> mean_axis(const TensorPtr<T>& a, int axis) {
    const auto v = detail::axis_view(a->shape, axis);
    auto out = fresh(detail::drop_axis(a->shape, axis), {a});
    for (std::int64_t o = 0; o < v.outer; ++o)
      for (std::int64_t i = 0; i < v.inner; ++i) {
        double acc = 0.0;
        for (std::int64_t k = 0; k < v.len; ++k)
          acc += double(a->value[std::size_t((o * v.len + k) * v.inner + i)]);
        out->value[std::size_t(o * v.inner + i)] = T(acc / double(v.len));
      }
    record(out, [a, out, v] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      const T inv = T(1.0 / double(v.len));
      for (std::int64_t o = 0; o < v.outer; ++o)
        for (std::int64_t i = 0; i < v.inner; ++i) {
          const T g = out->grad[std::size_t(o * v.inner + i)] * inv;
          for (std::int64_t k = 0; k < v.len; ++k)
            a->grad[std::size_t((o * v.len + k) * v.inner + i)] += g;
        }
    });
    return out;
  }

  TensorPtr<T> sum_all(const TensorPtr<T>& a) {
    auto out = fresh({1}, {a});
    double acc = 0.0;
    for (T x : a->value) acc += double(x);
    out->value[0] = T(acc);
    record(out, [a, out] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      const T g = out->grad[0];
      for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
    return out;
  }

  TensorPtr<T> mean_all(const TensorPtr<T>& a) {
    auto out = fresh({1}, {a});
    double acc = 0.0;
    for (T x : a->value) acc += double(x);
    const std::int64_t n = a->numel();
    out->value[0] = T(acc / double(n));
    record(out, [a, out, n] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      const T g = T(double(out->grad[0]) / double(n));
      for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
    return out;
  }

  // Layer norm over the last axis; gamma/beta length must equal that axis.
  TensorPtr<T> layer_norm(const TensorPtr<T>& a, const TensorPtr<T>& gamma,
                          const TensorPtr<T>& beta, double eps = 1e-5) {
    const std::int64_t f = a->dim(-1), rows = a->numel() / f;
    if (gamma->numel() != f || beta->numel() != f)
      throw ShapeError("layer_norm: params " + shape_str(gamma->shape) + " for " + shape_str(a->shape));
    auto out = fresh(a->shape, {a, gamma, beta});
    auto xhat = std::make_shared<std::vector<double>>(std::size_t(rows * f));
    auto inv_std = std::make_shared<std::vector<double>>(std::size_t(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* x = a->value.data() + r * f;
      double mu = 0.0;
      for (std::int64_t j = 0; j < f; ++j) mu += double(x[j]);
      mu /= double(f);
      double var = 0.0;
      for (std::int64_t j = 0; j < f; ++j) {
        const double d = double(x[j]) - mu;
        var += d * d;
      }
      var /= double(f);
      const double inv = 1.0 / std::sqrt(var + eps);
      (*inv_std)[std::size_t(r)] = inv;
      for (std::int64_t j = 0; j < f; ++j) {
        const double xh = (double(x[j]) - mu) * inv;
        (*xhat)[std::size_t(r * f + j)] = xh;
        out->value[std::size_t(r * f + j)] =
            T(xh * double(gamma->value[std::size_t(j)]) + double(beta->value[std::size_t(j)]));
      }
    }
    record(out, [a, gamma, beta, out, xhat, inv_std, rows, f] {
      if (gamma->requires_grad) {
        gamma->ensure_grad();
        for (std::int64_t j = 0; j < f; ++j) {
          double acc = 0.0;
          for (std::int64_t r = 0; r < rows; ++r)
            acc += double(out->grad[std::size_t(r * f + j)]) * (*xhat)[std::size_t(r * f + j)];
          gamma->grad[std::size_t(j)] += T(acc);
        }
      }
      if (beta->requires_grad) {
        beta->ensure_grad();
        for (std::int64_t j = 0; j < f; ++j) {
          double acc = 0.0;
          for (std::int64_t r = 0; r < rows; ++r) acc += double(out->grad[std::size_t(r * f + j)]);
          beta->grad[std::size_t(j)] += T(acc);
        }
      }
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          double m1 = 0.0, m2 = 0.0;
          for (std::int64_t j = 0; j < f; ++j) {
            const double dyh =
                double(out->grad[std::size_t(r * f + j)]) * double(gamma->value[std::size_t(j)]);
            m1 += dyh;
            m2 += dyh * (*xhat)[std::size_t(r * f + j)];
          }
          m1 /= double(f);
          m2 /= double(f);
          const double inv = (*inv_std)[std::size_t(r)];
          for (std::int64_t j = 0; j < f; ++j) {
            const double dyh =
                double(out->grad[std::size_t(r * f + j)]) * double(gamma->value[std::size_t(j)]);
            a->grad[std::size_t(r * f + j)] +=
                T((dyh - m1 - (*xhat)[std::size_t(r * f + j)] * m2) * inv);
          }
        }
      }
    });
    return out;
  }

  // Batch norm over axis 0 of a (B,F) input. beta may be null (bias-free
  // variant). Train mode normalizes with batch statistics and updates the
  // running buffers; eval mode uses the running buffers.
  TensorPtr<T> batch_norm(const TensorPtr<T>& a, const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                          BatchNormState<T>& state, bool train, double momentum = 0.1,
                          double eps = 1e-5) {
    if (a->rank() != 2) throw ShapeError("batch_norm: rank-2 required, got " + shape_str(a->shape));
    const std::int64_t B = a->dim(0), f = a->dim(1);
    if (gamma->numel() != f || (beta && beta->numel() != f) ||
        std::int64_t(state.running_mean.size()) != f)
      throw ShapeError("batch_norm: parameter length mismatch for " + shape_str(a->shape));
    if (train && B < 2) throw std::invalid_argument("batch_norm: train mode needs batch >= 2");

    std::vector<TensorPtr<T>> ins = {a, gamma};
    if (beta) ins.push_back(beta);
    auto out = fresh(a->shape, ins);
    auto xhat = std::make_shared<std::vector<double>>(std::size_t(B * f));
    auto inv_std = std::make_shared<std::vector<double>>(std::size_t(f));

    for (std::int64_t j = 0; j < f; ++j) {
      double mu, var;
      if (train) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < B; ++i) acc += double(a->value[std::size_t(i * f + j)]);
        mu = acc / double(B);
        double vacc = 0.0;
        for (std::int64_t i = 0; i < B; ++i) {
          const double d = double(a->value[std::size_t(i * f + j)]) - mu;
          vacc += d * d;
        }
        var = vacc / double(B);
        const double unbiased = vacc / double(B - 1);
        state.running_mean[std::size_t(j)] =
            T((1.0 - momentum) * double(state.running_mean[std::size_t(j)]) + momentum * mu);
        state.running_var[std::size_t(j)] =
            T((1.0 - momentum) * double(state.running_var[std::size_t(j)]) + momentum * unbiased);
      } else {
        mu = double(state.running_mean[std::size_t(j)]);
        var = double(state.running_var[std::size_t(j)]);
      }
      const double inv = 1.0 / std::sqrt(var + eps);
      (*inv_std)[std::size_t(j)] = inv;
      for (std::int64_t i = 0; i < B; ++i) {
        const double xh = (double(a->value[std::size_t(i * f + j)]) - mu) * inv;
        (*xhat)[std::size_t(i * f + j)] = xh;
        double y = xh * double(gamma->value[std::size_t(j)]);
        if (beta) y += double(beta->value[std::size_t(j)]);
        out->value[std::size_t(i * f + j)] = T(y);
      }
    }
    record(out, [a, gamma, beta, out, xhat, inv_std, B, f, train] {
      if (gamma->requires_grad) {
        gamma->ensure_grad();
        for (std::int64_t j = 0; j < f; ++j) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < B; ++i)
            acc += double(out->grad[std::size_t(i * f + j)]) * (*xhat)[std::size_t(i * f + j)];
          gamma->grad[std::size_t(j)] += T(acc);
        }
      }
      if (beta && beta->requires_grad) {
        beta->ensure_grad();
        for (std::int64_t j = 0; j < f; ++j) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < B; ++i) acc += double(out->grad[std::size_t(i * f + j)]);
          beta->grad[std::size_t(j)] += T(acc);
        }
      }
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::int64_t j = 0; j < f; ++j) {
          const double g = double(gamma->value[std::size_t(j)]);
          const double inv = (*inv_std)[std::size_t(j)];
          if (train) {
            double m1 = 0.0, m2 = 0.0;
            for (std::int64_t i = 0; i < B; ++i) {
              const double dyh = double(out->grad[std::size_t(i * f + j)]) * g;
              m1 += dyh;
              m2 += dyh * (*xhat)[std::size_t(i * f + j)];
            }
            m1 /= double(B);
            m2 /= double(B);
            for (std::int64_t i = 0; i < B; ++i) {
              const double dyh = double(out->grad[std::size_t(i * f + j)]) * g;
              a->grad[std::size_t(i * f + j)] +=
                  T((dyh - m1 - (*xhat)[std::size_t(i * f + j)] * m2) * inv);
            }
          } else {
            for (std::int64_t i = 0; i < B; ++i)
              a->grad[std::size_t(i * f + j)] += T(double(out->grad[std::size_t(i * f + j)]) * g * inv);
          }
        }
      }
    });
    return out;
  }

  // Unit-normalize each row over the last axis; rows with norm below eps are
  // scaled by 1/eps instead.
  TensorPtr<T> l2_normalize(const TensorPtr<T>& a, double eps = 1e-12) {
    const std::int64_t f = a->dim(-1), rows = a->numel() / f;
    auto out = fresh(a->shape, {a});
    auto norms = std::make_shared<std::vector<double>>(std::size_t(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* x = a->value.data() + r * f;
      double acc = 0.0;
      for (std::int64_t j = 0; j < f; ++j) acc += double(x[j]) * double(x[j]);
      const double n = std::max(std::sqrt(acc), eps);
      (*norms)[std::size_t(r)] = n;
      for (std::int64_t j = 0; j < f; ++j) out->value[std::size_t(r * f + j)] = T(double(x[j]) / n);
    }
    record(out, [a, out, norms, rows, f] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        const double n = (*norms)[std::size_t(r)];
        double dot = 0.0;
        for (std::int64_t j = 0; j < f; ++j)
          dot += double(out->grad[std::size_t(r * f + j)]) * double(out->value[std::size_t(r * f + j)]);
        for (std::int64_t j = 0; j < f; ++j)
          a->grad[std::size_t(r * f + j)] +=
              T((double(out->grad[std::size_t(r * f + j)]) -
                 double(out->value[std::size_t(r * f + j)]) * dot) /
                n);
      }
    });
    return out;
  }

  // --- selection ---------------------------------------------------------------

  TensorPtr<T> diag(const TensorPtr<T>& a) {
    if (a->rank() != 2 || a->dim(0) != a->dim(1))
      throw ShapeError("diag: square matrix required, got " + shape_str(a->shape));
    const std::int64_t n = a->dim(0);
    auto out = fresh({n}, {a});
    for (std::int64_t i = 0; i < n; ++i) out->value[std::size_t(i)] = a->value[std::size_t(i * n + i)];
    record(out, [a, out, n] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) a->grad[std::size_t(i * n + i)] += out->grad[std::size_t(i)];
    });
    return out;
  }

  // out[i] = a[i, idx[i]]
  TensorPtr<T> pick(const TensorPtr<T>& a, std::vector<std::int64_t> idx) {
    if (a->rank() != 2 || std::int64_t(idx.size()) != a->dim(0))
      throw ShapeError("pick: " + shape_str(a->shape) + " with " + std::to_string(idx.size()) + " indices");
    const std::int64_t n = a->dim(0), c = a->dim(1);
    for (std::int64_t i : idx)
      if (i < 0 || i >= c) throw std::out_of_range("pick: column " + std::to_string(i));
    auto out = fresh({n}, {a});
    for (std::int64_t i = 0; i < n; ++i)
      out->value[std::size_t(i)] = a->value[std::size_t(i * c + idx[std::size_t(i)])];
    record(out, [a, out, idx = std::move(idx), n, c] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i)
        a->grad[std::size_t(i * c + idx[std::size_t(i)])] += out->grad[std::size_t(i)];
    });
    return out;
  }

  // --- fused losses ---------------------------------------------------------------

  TensorPtr<T> cross_entropy(const TensorPtr<T>& logits, const std::vector<std::int64_t>& labels) {
    if (logits->rank() != 2 || std::int64_t(labels.size()) != logits->dim(0))
      throw ShapeError("cross_entropy: " + shape_str(logits->shape) + " with " +
                       std::to_string(labels.size()) + " labels");
    const std::int64_t B = logits->dim(0), C = logits->dim(1);
    for (std::int64_t l : labels)
      if (l < 0 || l >= C) throw std::out_of_range("cross_entropy: label " + std::to_string(l));
    auto out = fresh({1}, {logits});
    auto probs = std::make_shared<std::vector<double>>(std::size_t(B * C));
    double total = 0.0;
    for (std::int64_t i = 0; i < B; ++i) {
      const T* x = logits->value.data() + i * C;
      double mx = double(x[0]);
      for (std::int64_t j = 1; j < C; ++j) mx = std::max(mx, double(x[j]));
      double denom = 0.0;
      for (std::int64_t j = 0; j < C; ++j) denom += std::exp(double(x[j]) - mx);
      const double lse = mx + std::log(denom);
      for (std::int64_t j = 0; j < C; ++j)
        (*probs)[std::size_t(i * C + j)] = std::exp(double(x[j]) - lse);
      total += lse - double(x[labels[std::size_t(i)]]);
    }
    out->value[0] = T(total / double(B));
    record(out, [logits, out, probs, labels, B, C] {
      if (!logits->requires_grad) return;
      logits->ensure_grad();
      const double g = double(out->grad[0]) / double(B);
      for (std::int64_t i = 0; i < B; ++i)
        for (std::int64_t j = 0; j < C; ++j) {
          const double onehot = (j == labels[std::size_t(i)]) ? 1.0 : 0.0;
          logits->grad[std::size_t(i * C + j)] += T(((*probs)[std::size_t(i * C + j)] - onehot) * g);
        }
    });
    return out;
  }

  // Mean over all elements of max(z,0) - z*y + log(1 + exp(-|z|)).
  TensorPtr<T> bce_with_logits(const TensorPtr<T>& logits, const TensorPtr<T>& targets) {
    require_same("bce_with_logits", logits, targets);
    const std::int64_t n = logits->numel();
    auto out = fresh({1}, {logits});
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double z = double(logits->value[std::size_t(i)]);
      const double y = double(targets->value[std::size_t(i)]);
      total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
    }
    out->value[0] = T(total / double(n));
    record(out, [logits, targets, out, n] {
      if (!logits->requires_grad) return;
      logits->ensure_grad();
      const double g = double(out->grad[0]) / double(n);
      for (std::int64_t i = 0; i < n; ++i) {
        const double z = double(logits->value[std::size_t(i)]);
        const double sig = 1.0 / (1.0 + std::exp(-z));
        logits->grad[std::size_t(i)] += T((sig - double(targets->value[std::size_t(i)])) * g);
      }
    });
    return out;
  }

 private:
  std::vector<std::function<void()>> nodes_;

  static void require_same(const char* op, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape)
      throw ShapeError(std::string(op) + ": " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  }

  TensorPtr<T> fresh(Shape shape, const std::vector<TensorPtr<T>>& ins) {
    auto out = make_tensor<T>(std::move(shape));
    if (recording)
      for (const auto& in : ins)
        if (in->requires_grad) {
          out->requires_grad = true;
          break;
        }
    return out;
  }

  void record(const TensorPtr<T>& out, std::function<void()> back) {
    if (check_finite && !all_finite(*out)) throw std::runtime_error("non-finite value in forward op");
    if (recording && out->requires_grad) nodes_.push_back(std::move(back));
  }

  TensorPtr<T> softmax_impl(const TensorPtr<T>& a, int axis, bool log_form) {
    const auto v = detail::axis_view(a->shape, axis);
    auto out = fresh(a->shape, {a});
    for (std::int64_t o = 0; o < v.outer; ++o)
      for (std::int64_t i = 0; i < v.inner; ++i) {
        const auto at = [&](std::int64_t k) { return std::size_t((o * v.len + k) * v.inner + i); };
        double mx = double(a->value[at(0)]);
        for (std::int64_t k = 1; k < v.len; ++k) mx = std::max(mx, double(a->value[at(k)]));
        double denom = 0.0;
        for (std::int64_t k = 0; k < v.len; ++k) denom += std::exp(double(a->value[at(k)]) - mx);
        if (log_form) {
          const double lse = mx + std::log(denom);
          for (std::int64_t k = 0; k < v.len; ++k) out->value[at(k)] = T(double(a->value[at(k)]) - lse);
        } else {
          for (std::int64_t k = 0; k < v.len; ++k)
            out->value[at(k)] = T(std::exp(double(a->value[at(k)]) - mx) / denom);
        }
      }
    record(out, [a, out, v, log_form] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (std::int64_t o = 0; o < v.outer; ++o)
        for (std::int64_t i = 0; i < v.inner; ++i) {
          const auto at = [&](std::int64_t k) { return std::size_t((o * v.len + k) * v.inner + i); };
          double dot = 0.0;
          for (std::int64_t k = 0; k < v.len; ++k) {
            const double g = double(out->grad[at(k)]);
            dot += log_form ? g : g * double(out->value[at(k)]);
          }
          for (std::int64_t k = 0; k < v.len; ++k) {
            const double g = double(out->grad[at(k)]);
            if (log_form)
              a->grad[at(k)] += T(g - std::exp(double(out->value[at(k)])) * dot);
            else
              a->grad[at(k)] += T(double(out->value[at(k)]) * (g - dot));
          }
        }
    });
    return out;
  }
};

// Max relative error between analytic gradients and central finite
// differences of a scalar-valued builder, per the formula
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename BuildFn>
double grad_check(BuildFn&& build, const std::vector<TensorPtr<double>>& inputs, double eps = 1e-4) {
  Tape<double> tape;
  auto loss = build(tape);
  if (loss->numel() != 1) throw std::invalid_argument("grad_check: function must be scalar-valued");
  for (const auto& in : inputs) in->zero_grad();
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const auto& in : inputs) {
    in->ensure_grad();
    analytic.push_back(in->grad);
  }

  auto eval = [&]() {
    Tape<double> t;
    t.recording = false;
    return build(t)->value[0];
  };

  double max_err = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& x = inputs[t]->value;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + eps;
      const double fp = eval();
      x[i] = saved - eps;
      const double fm = eval();
      x[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[t][i];
      const double err = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace maskclr
