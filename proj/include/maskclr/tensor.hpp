// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense tensor storage and the raw matrix kernels shared by the autodiff
// layer. Scalar type is a template parameter: double for oracle/gradient
// tests, float for training. Reductions and inner products accumulate in
// double regardless of T so loss values are stable enough for oracle
// comparison.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/thread_pool.hpp"

namespace maskclr {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily by ensure_grad()
  bool requires_grad = false;
  std::string name;

  std::int64_t numel() const { return std::int64_t(value.size()); }
  std::int64_t dim(int i) const { return shape[std::size_t(i < 0 ? int(shape.size()) + i : i)]; }
  int rank() const { return int(shape.size()); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  t->value.assign(std::size_t(shape_numel(t->shape)), T(0));
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> values, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  if (std::int64_t(values.size()) != shape_numel(t->shape))
    throw ShapeError("tensor init: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(t->shape));
  t->value = std::move(values);
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.value)
    if (!std::isfinite(double(v))) return false;
  return true;
}

// --- raw kernels ---------------------------------------------------------------

namespace kernels {

// C (m,n) = A (m,k) @ B (k,n); accumulates into C when accumulate is set.
// Row-buffered double accumulation: the k loop order is fixed, so results do
// not depend on the thread count.
template <typename T>
void mm_nn(const T* A, const T* B, T* C, std::int64_t m, std::int64_t k, std::int64_t n,
           bool accumulate) {
  parallel_for(m, std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, k * n)),
               [&](std::int64_t r0, std::int64_t r1) {
                 std::vector<double> acc(static_cast<std::size_t>(n));
                 for (std::int64_t i = r0; i < r1; ++i) {
                   std::fill(acc.begin(), acc.end(), 0.0);
                   const T* a = A + i * k;
                   for (std::int64_t p = 0; p < k; ++p) {
                     const double av = double(a[p]);
                     const T* b = B + p * n;
                     for (std::int64_t j = 0; j < n; ++j) acc[std::size_t(j)] += av * double(b[j]);
                   }
                   T* c = C + i * n;
                   if (accumulate)
                     for (std::int64_t j = 0; j < n; ++j) c[j] += T(acc[std::size_t(j)]);
                   else
                     for (std::int64_t j = 0; j < n; ++j) c[j] = T(acc[std::size_t(j)]);
                 }
               });
}

template <typename T>
void transpose_2d(const T* A, T* At, std::int64_t m, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) At[j * m + i] = A[i * n + j];
}

}  // namespace kernels

}  // namespace maskclr
