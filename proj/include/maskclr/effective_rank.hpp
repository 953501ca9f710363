// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Effective rank of an embedding matrix: the exponential of the Shannon
// entropy of its normalized singular values. Singular values come from a
// cyclic Jacobi eigendecomposition of the smaller Gram matrix, which keeps
// the dependency footprint at zero and is deterministic.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace maskclr {

// Eigenvalues of a symmetric n x n matrix (row-major, modified in place) by
// cyclic Jacobi rotations. Sweeps until the off-diagonal Frobenius norm
// drops below tol * max(1, ||A||_F).
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::int64_t n,
                                              double tol = 1e-12, int max_sweeps = 64) {
  auto at = [&](std::int64_t i, std::int64_t j) -> double& { return a[std::size_t(i * n + j)]; };
  double fro = 0.0;
  for (double v : a) fro += v * v;
  const double threshold = tol * std::max(1.0, std::sqrt(fro));

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = i + 1; j < n; ++j) off += 2.0 * at(i, j) * at(i, j);
    if (std::sqrt(off) <= threshold) break;

    for (std::int64_t p = 0; p < n - 1; ++p)
      for (std::int64_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::int64_t k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::int64_t k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) eig[std::size_t(i)] = at(i, i);
  return eig;
}

struct SingularSpectrum {
  std::vector<double> sigma;  // non-increasing, non-negative
  std::vector<double> p;      // sigma normalized to sum 1
  double erank = 0.0;
};

// erank = exp(-sum p_k log p_k) with 0 log 0 := 0.
inline double effective_rank(const std::vector<double>& sigma) {
  double total = 0.0;
  for (double s : sigma) {
    if (s < 0.0) throw std::invalid_argument("effective_rank: negative singular value");
    total += s;
  }
  if (total <= 0.0) throw std::invalid_argument("effective_rank: all singular values are zero");
  double entropy = 0.0;
  for (double s : sigma) {
    const double pk = s / total;
    if (pk > 0.0) entropy -= pk * std::log(pk);
  }
  return std::exp(entropy);
}

// Singular values of a B x d row-major matrix via the smaller Gram matrix
// (Z^T Z or Z Z^T); eigenvalues are clamped at zero before the square root.
inline SingularSpectrum singular_values(const std::vector<double>& z, std::int64_t rows,
                                        std::int64_t cols) {
  if (std::int64_t(z.size()) != rows * cols || rows < 1 || cols < 1)
    throw std::invalid_argument("singular_values: bad matrix");
  double norm = 0.0;
  for (double v : z) norm += v * v;
  if (norm == 0.0) throw std::invalid_argument("singular_values: zero matrix");

  const bool use_cols = cols <= rows;
  const std::int64_t q = use_cols ? cols : rows;
  std::vector<double> gram(std::size_t(q * q), 0.0);
  if (use_cols) {
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t i = 0; i < q; ++i) {
        const double zi = z[std::size_t(r * cols + i)];
        if (zi == 0.0) continue;
        for (std::int64_t j = i; j < q; ++j)
          gram[std::size_t(i * q + j)] += zi * z[std::size_t(r * cols + j)];
      }
  } else {
    for (std::int64_t i = 0; i < q; ++i)
      for (std::int64_t j = i; j < q; ++j) {
        double acc = 0.0;
        for (std::int64_t k = 0; k < cols; ++k)
          acc += z[std::size_t(i * cols + k)] * z[std::size_t(j * cols + k)];
        gram[std::size_t(i * q + j)] = acc;
      }
  }
  for (std::int64_t i = 0; i < q; ++i)
    for (std::int64_t j = 0; j < i; ++j) gram[std::size_t(i * q + j)] = gram[std::size_t(j * q + i)];

  auto eig = jacobi_eigenvalues(std::move(gram), q);
  SingularSpectrum spec;
  spec.sigma.resize(std::size_t(q));
  for (std::int64_t i = 0; i < q; ++i)
    spec.sigma[std::size_t(i)] = std::sqrt(std::max(eig[std::size_t(i)], 0.0));
  std::sort(spec.sigma.begin(), spec.sigma.end(), std::greater<double>());
  double total = 0.0;
  for (double s : spec.sigma) total += s;
  spec.p.resize(spec.sigma.size());
  for (std::size_t i = 0; i < spec.sigma.size(); ++i) spec.p[i] = spec.sigma[i] / total;
  spec.erank = effective_rank(spec.sigma);
  return spec;
}

// Optional mean-centering before the SVD (off by default; the diagnostic is
// defined on the raw matrix).
inline std::vector<double> center_rows(std::vector<double> z, std::int64_t rows, std::int64_t cols) {
  for (std::int64_t j = 0; j < cols; ++j) {
    double mu = 0.0;
    for (std::int64_t i = 0; i < rows; ++i) mu += z[std::size_t(i * cols + j)];
    mu /= double(rows);
    for (std::int64_t i = 0; i < rows; ++i) z[std::size_t(i * cols + j)] -= mu;
  }
  return z;
}

}  // namespace maskclr
