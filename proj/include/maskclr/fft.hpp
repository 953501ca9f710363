// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace maskclr {

// Iterative radix-2 FFT with a precomputed plan (bit-reversal table and
// twiddles). Sized once per mel extractor; power spectra for framing reuse
// the same scratch buffer.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");
    bitrev_.resize(n);
    std::size_t log2n = 0;
    while ((std::size_t(1) << log2n) < n) ++log2n;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < log2n; ++b)
        if (i & (std::size_t(1) << b)) r |= std::size_t(1) << (log2n - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * M_PI * double(k) / double(n);
      twiddle_[k] = {std::cos(ang), std::sin(ang)};
    }
  }

  std::size_t size() const { return n_; }

  // In-place complex transform; buf.size() must equal size().
  void transform(std::vector<std::complex<double>>& buf) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t j = bitrev_[i];
      if (i < j) std::swap(buf[i], buf[j]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len >> 1;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const std::complex<double> w = twiddle_[k * stride];
          const std::complex<double> u = buf[start + k];
          const std::complex<double> t = w * buf[start + k + half];
          buf[start + k] = u + t;
          buf[start + k + half] = u - t;
        }
      }
    }
  }

  // Power spectrum |X_k|^2 for k = 0..n/2 of a real frame (frame shorter than
  // the transform size is zero-padded). The caller owns the scratch buffer so
  // concurrent extraction over clips stays race-free.
  void power_spectrum(const double* frame, std::size_t frame_len, std::vector<double>& out,
                      std::vector<std::complex<double>>& scratch) const {
    scratch.assign(n_, {0.0, 0.0});
    const std::size_t m = std::min(frame_len, n_);
    for (std::size_t i = 0; i < m; ++i) scratch[i] = {frame[i], 0.0};
    transform(scratch);
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = std::norm(scratch[k]);
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;
};

}  // namespace maskclr
