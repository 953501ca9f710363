// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskclr {

// Mono sample buffer, amplitudes nominally in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 0;

  std::int64_t size() const { return std::int64_t(samples.size()); }
  double duration_s() const {
    return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0;
  }
};

inline void validate_waveform(const Waveform& w) {
  if (w.sample_rate <= 0) throw std::invalid_argument("waveform: sample_rate must be > 0");
  if (w.samples.empty()) throw std::invalid_argument("waveform: empty sample buffer");
  for (float s : w.samples)
    if (!std::isfinite(s)) throw std::invalid_argument("waveform: non-finite sample");
}

// Mean power of the buffer, accumulated in double.
inline double signal_power(const std::vector<float>& x) {
  double acc = 0.0;
  for (float v : x) acc += double(v) * double(v);
  return x.empty() ? 0.0 : acc / double(x.size());
}

inline float peak_amplitude(const std::vector<float>& x) {
  float p = 0.0f;
  for (float v : x) p = std::max(p, std::fabs(v));
  return p;
}

// Linear-interpolation resampler. Output length is round(len * target / source);
// equal rates return a bit-identical copy.
inline Waveform resample_linear(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw std::invalid_argument("resample: target_rate must be > 0");
  if (target_rate == w.sample_rate) return w;

  const std::int64_t in_len = w.size();
  const std::int64_t out_len =
      std::int64_t(std::llround(double(in_len) * target_rate / w.sample_rate));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(std::size_t(std::max<std::int64_t>(out_len, 0)));
  const double step = double(w.sample_rate) / double(target_rate);
  for (std::int64_t i = 0; i < out_len; ++i) {
    const double pos = double(i) * step;
    std::int64_t i0 = std::int64_t(pos);
    if (i0 >= in_len - 1) {
      out.samples[std::size_t(i)] = w.samples[std::size_t(in_len - 1)];
      continue;
    }
    const double frac = pos - double(i0);
    const double a = w.samples[std::size_t(i0)];
    const double b = w.samples[std::size_t(i0 + 1)];
    out.samples[std::size_t(i)] = float(a + (b - a) * frac);
  }
  return out;
}

// Resample by a raw playback factor: output index i reads source position
// i * factor. factor > 1 shortens the buffer (plays faster). Sample rate tag
// is preserved; used by pitch shifting where the rate must not change.
inline std::vector<float> resample_by_factor(const std::vector<float>& x, double factor) {
  if (factor <= 0.0) throw std::invalid_argument("resample_by_factor: factor must be > 0");
  const std::int64_t in_len = std::int64_t(x.size());
  const std::int64_t out_len = std::int64_t(std::llround(double(in_len) / factor));
  std::vector<float> out(static_cast<std::size_t>(std::max<std::int64_t>(out_len, 0)));
  for (std::int64_t i = 0; i < out_len; ++i) {
    const double pos = double(i) * factor;
    std::int64_t i0 = std::int64_t(pos);
    if (i0 >= in_len - 1) {
      out[std::size_t(i)] = x[std::size_t(in_len - 1)];
      continue;
    }
    const double frac = pos - double(i0);
    out[std::size_t(i)] = float(x[std::size_t(i0)] + (x[std::size_t(i0 + 1)] - x[std::size_t(i0)]) * frac);
  }
  return out;
}

}  // namespace maskclr
