// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Stochastic waveform augmentation chain used to derive the two views of a
// clip before spectrogram masking. Stages run in a fixed order, each firing
// with its own probability from a stream derived deterministically from the
// caller's seed, so a (waveform, config, seed) triple always produces the
// same output.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "maskclr/audio.hpp"
#include "maskclr/rng.hpp"

namespace maskclr {

struct StageConfig {
  double probability = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentConfig {
  StageConfig polarity{0.5, 0.0, 0.0};
  StageConfig time_stretch{0.7, 0.7, 1.25};     // rate
  StageConfig noise_snr{0.5, 5.0, 40.0};        // dB
  StageConfig gain{0.3, -12.0, 12.0};           // dB
  StageConfig highpass{0.3, 20.0, 2400.0};      // cutoff Hz
  StageConfig bandstop{0.5, 200.0, 4000.0};     // center Hz
  StageConfig pitch_shift{0.6, -4.0, 4.0};      // semitones

  void validate() const {
    for (const StageConfig* s :
         {&polarity, &time_stretch, &noise_snr, &gain, &highpass, &bandstop, &pitch_shift}) {
      if (s->probability < 0.0 || s->probability > 1.0)
        throw std::invalid_argument("augment: probability must be in [0,1]");
      if (s->lo > s->hi) throw std::invalid_argument("augment: stage range must have min <= max");
    }
  }
};

// --- individual stages --------------------------------------------------------

inline void polarity_invert(std::vector<float>& x) {
  for (float& v : x) v = -v;
}

inline void apply_gain_db(std::vector<float>& x, double db) {
  const float g = float(std::pow(10.0, db / 20.0));
  for (float& v : x) v *= g;
}

// White Gaussian noise scaled so 10*log10(P_signal / P_noise) == snr_db.
inline void add_noise_snr_db(std::vector<float>& x, double snr_db, Rng& rng) {
  const double p_sig = signal_power(x);
  if (p_sig <= 0.0) return;  // silence carries no SNR reference
  const double p_noise = p_sig / std::pow(10.0, snr_db / 10.0);
  const float scale = float(std::sqrt(p_noise));
  for (float& v : x) v += scale * float(rng.gaussian());
}

// Transposed direct-form II biquad, zero initial state, double internal state.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  void apply(std::vector<float>& x) const {
    double z1 = 0.0, z2 = 0.0;
    for (float& v : x) {
      const double in = v;
      const double out = b0 * in + z1;
      z1 = b1 * in - a1 * out + z2;
      z2 = b2 * in - a2 * out;
      v = float(out);
    }
  }
};

// Butterworth high-pass (Q = 1/sqrt(2)).
inline Biquad highpass_biquad(double cutoff_hz, int sample_rate) {
  const double w0 = 2.0 * M_PI * cutoff_hz / sample_rate;
  const double q = 1.0 / std::sqrt(2.0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad f;
  f.b0 = (1.0 + c) / 2.0 / a0;
  f.b1 = -(1.0 + c) / a0;
  f.b2 = (1.0 + c) / 2.0 / a0;
  f.a1 = -2.0 * c / a0;
  f.a2 = (1.0 - alpha) / a0;
  return f;
}

// Notch with bandwidth given in octaves.
inline Biquad bandstop_biquad(double center_hz, double bandwidth_octaves, int sample_rate) {
  const double w0 = 2.0 * M_PI * center_hz / sample_rate;
  const double alpha =
      std::sin(w0) * std::sinh(std::log(2.0) / 2.0 * bandwidth_octaves * w0 / std::sin(w0));
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad f;
  f.b0 = 1.0 / a0;
  f.b1 = -2.0 * c / a0;
  f.b2 = 1.0 / a0;
  f.a1 = -2.0 * c / a0;
  f.a2 = (1.0 - alpha) / a0;
  return f;
}

// Overlap-add time stretch with 50%-overlapped Hann grains. rate > 1 shortens
// the clip (duration scales by 1/rate). Phase coherence is not attempted; the
// views only need to stay plausibly the same utterance.
inline std::vector<float> time_stretch_to(const std::vector<float>& x, std::int64_t out_len,
                                          std::int64_t grain = 800) {
  const std::int64_t in_len = std::int64_t(x.size());
  if (in_len == 0 || out_len <= 0) return std::vector<float>(std::size_t(std::max<std::int64_t>(out_len, 0)), 0.0f);
  grain = std::min(grain, std::max<std::int64_t>(in_len, 2));
  if (grain % 2) --grain;
  if (grain < 2) grain = 2;
  const std::int64_t hop_out = grain / 2;
  const double hop_in = double(hop_out) * double(in_len) / double(out_len);

  std::vector<double> window(static_cast<std::size_t>(grain));
  for (std::int64_t i = 0; i < grain; ++i)
    window[std::size_t(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(grain));  // periodic

  std::vector<double> acc(std::size_t(out_len), 0.0);
  std::vector<double> wsum(std::size_t(out_len), 0.0);
  const std::int64_t n_grains = out_len / hop_out + 2;
  for (std::int64_t g = 0; g < n_grains; ++g) {
    const std::int64_t out_pos = g * hop_out;
    if (out_pos >= out_len) break;
    const std::int64_t in_pos = std::int64_t(std::llround(double(g) * hop_in));
    for (std::int64_t i = 0; i < grain; ++i) {
      const std::int64_t oi = out_pos + i;
      if (oi >= out_len) break;
      const std::int64_t ii = in_pos + i;
      const double v = (ii < in_len) ? double(x[std::size_t(ii)]) : 0.0;
      acc[std::size_t(oi)] += v * window[std::size_t(i)];
      wsum[std::size_t(oi)] += window[std::size_t(i)];
    }
  }
  std::vector<float> out(static_cast<std::size_t>(out_len));
  for (std::int64_t i = 0; i < out_len; ++i) {
    const double w = wsum[std::size_t(i)];
    out[std::size_t(i)] = float(w > 1e-6 ? acc[std::size_t(i)] / w : acc[std::size_t(i)]);
  }
  return out;
}

inline std::vector<float> time_stretch(const std::vector<float>& x, double rate) {
  if (rate <= 0.0) throw std::invalid_argument("time_stretch: rate must be > 0");
  const std::int64_t out_len = std::int64_t(std::llround(double(x.size()) / rate));
  return time_stretch_to(x, out_len);
}

// Linear resample by 2^(semitones/12), then stretch back to the original
// duration.
inline std::vector<float> pitch_shift(const std::vector<float>& x, double semitones) {
  const double factor = std::pow(2.0, semitones / 12.0);
  std::vector<float> shifted = resample_by_factor(x, factor);
  return time_stretch_to(shifted, std::int64_t(x.size()));
}

// Rotates the sample buffer by a uniform offset. Sample multiset (and hence
// total energy) is preserved exactly.
inline Waveform cyclic_roll(const Waveform& w, std::uint64_t seed) {
  Waveform out = w;
  if (w.samples.size() < 2) return out;
  Rng rng(seed_mix({seed, stage::kRoll}));
  const std::int64_t n = w.size();
  const std::int64_t off = rng.uniform_int(0, n - 1);
  for (std::int64_t i = 0; i < n; ++i)
    out.samples[std::size_t(i)] = w.samples[std::size_t((i + off) % n)];
  return out;
}

// Full chain, fixed stage order. Output is clipped to [-1, 1]; clipping is
// expected behaviour, not an error.
inline Waveform augment_waveform(const Waveform& w, const AugmentConfig& cfg, std::uint64_t seed) {
  validate_waveform(w);
  cfg.validate();

  Waveform out = w;
  auto stage_rng = [seed](std::uint64_t index) { return Rng(seed_mix({seed, stage::kAugment, index})); };

  {
    Rng r = stage_rng(0);
    if (r.bernoulli(cfg.polarity.probability)) polarity_invert(out.samples);
  }
  {
    Rng r = stage_rng(1);
    if (r.bernoulli(cfg.time_stretch.probability)) {
      const double rate = r.uniform(cfg.time_stretch.lo, cfg.time_stretch.hi);
      out.samples = time_stretch(out.samples, rate);
    }
  }
  {
    Rng r = stage_rng(2);
    if (r.bernoulli(cfg.noise_snr.probability)) {
      const double snr = r.uniform(cfg.noise_snr.lo, cfg.noise_snr.hi);
      add_noise_snr_db(out.samples, snr, r);
    }
  }
  {
    Rng r = stage_rng(3);
    if (r.bernoulli(cfg.gain.probability)) apply_gain_db(out.samples, r.uniform(cfg.gain.lo, cfg.gain.hi));
  }
  {
    Rng r = stage_rng(4);
    if (r.bernoulli(cfg.highpass.probability)) {
      const double cutoff = r.uniform(cfg.highpass.lo, cfg.highpass.hi);
      highpass_biquad(cutoff, out.sample_rate).apply(out.samples);
    }
  }
  {
    Rng r = stage_rng(5);
    if (r.bernoulli(cfg.bandstop.probability)) {
      const double center = r.uniform(cfg.bandstop.lo, cfg.bandstop.hi);
      bandstop_biquad(center, 1.0, out.sample_rate).apply(out.samples);
    }
  }
  {
    Rng r = stage_rng(6);
    if (r.bernoulli(cfg.pitch_shift.probability)) {
      const double semitones = r.uniform(cfg.pitch_shift.lo, cfg.pitch_shift.hi);
      out.samples = pitch_shift(out.samples, semitones);
    }
  }

  for (float& v : out.samples) v = std::max(-1.0f, std::min(1.0f, v));
  return out;
}

}  // namespace maskclr
