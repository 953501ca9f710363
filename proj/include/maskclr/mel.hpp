// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Log-Mel spectrogram frontend: snip-edges framing, per-frame DC removal,
// Hann window, real-FFT power spectrum and an HTK-scale triangular mel
// filterbank, log-compressed with a positive floor.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/audio.hpp"
#include "maskclr/fft.hpp"

namespace maskclr {

struct MelConfig {
  int n_mels = 128;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  double fmin = 20.0;
  double fmax = 0.0;  // 0 -> Nyquist
  double log_floor = 1e-10;
  int target_frames = 1024;  // 10 s at a 10 ms hop

  void validate() const {
    if (n_mels < 1) throw std::invalid_argument("mel: n_mels must be >= 1");
    if (!(win_ms > hop_ms && hop_ms > 0)) throw std::invalid_argument("mel: need win_ms > hop_ms > 0");
    if (log_floor <= 0) throw std::invalid_argument("mel: log_floor must be > 0");
    if (target_frames <= 0) throw std::invalid_argument("mel: target_frames must be > 0");
  }
};

// Row-major frames x bins matrix of log energies.
struct Spectrogram {
  std::int64_t frames = 0;
  std::int64_t bins = 0;
  std::vector<float> values;

  float& at(std::int64_t t, std::int64_t f) { return values[std::size_t(t * bins + f)]; }
  float at(std::int64_t t, std::int64_t f) const { return values[std::size_t(t * bins + f)]; }
};

inline double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

inline std::int64_t frame_count(std::int64_t samples, std::int64_t win, std::int64_t hop) {
  return samples < win ? 0 : 1 + (samples - win) / hop;
}

// Precomputed mel extractor for one (sample_rate, config) pair.
class MelExtractor {
 public:
  MelExtractor(int sample_rate, const MelConfig& cfg)
      : cfg_(cfg), sample_rate_(sample_rate), fft_(fft_size_for(sample_rate, cfg)) {
    cfg.validate();
    win_samples_ = std::int64_t(std::llround(cfg.win_ms * sample_rate / 1000.0));
    hop_samples_ = std::int64_t(std::llround(cfg.hop_ms * sample_rate / 1000.0));
    window_.resize(std::size_t(win_samples_));
    for (std::int64_t i = 0; i < win_samples_; ++i)
      window_[std::size_t(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(win_samples_ - 1));
    build_filterbank();
  }

  std::int64_t win_samples() const { return win_samples_; }
  std::int64_t hop_samples() const { return hop_samples_; }
  std::size_t fft_size() const { return fft_.size(); }

  // Center frequency (Hz) of each mel filter; used by callers that want to
  // map bins back to frequencies.
  const std::vector<double>& bin_centers_hz() const { return centers_hz_; }

  Spectrogram extract(const Waveform& w) const {
    validate_waveform(w);
    if (w.sample_rate != sample_rate_)
      throw std::invalid_argument("mel: waveform rate " + std::to_string(w.sample_rate) +
                                  " != extractor rate " + std::to_string(sample_rate_));
    const std::int64_t n_frames = frame_count(w.size(), win_samples_, hop_samples_);
    if (n_frames == 0) throw std::invalid_argument("clip too short");

    Spectrogram s;
    s.frames = n_frames;
    s.bins = cfg_.n_mels;
    s.values.resize(std::size_t(n_frames * cfg_.n_mels));

    std::vector<double> frame(static_cast<std::size_t>(win_samples_));
    std::vector<double> power;
    std::vector<std::complex<double>> scratch;
    for (std::int64_t t = 0; t < n_frames; ++t) {
      const float* src = w.samples.data() + t * hop_samples_;
      double mean = 0.0;
      for (std::int64_t i = 0; i < win_samples_; ++i) mean += src[i];
      mean /= double(win_samples_);
      for (std::int64_t i = 0; i < win_samples_; ++i)
        frame[std::size_t(i)] = (double(src[i]) - mean) * window_[std::size_t(i)];
      fft_.power_spectrum(frame.data(), frame.size(), power, scratch);
      for (int m = 0; m < cfg_.n_mels; ++m) {
        const Filter& flt = filters_[std::size_t(m)];
        double e = 0.0;
        for (std::size_t k = 0; k < flt.weights.size(); ++k)
          e += flt.weights[k] * power[flt.first_bin + k];
        s.at(t, m) = float(std::log(std::max(e, cfg_.log_floor)));
      }
    }
    return s;
  }

 private:
  struct Filter {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };

  static std::size_t fft_size_for(int sample_rate, const MelConfig& cfg) {
    const std::int64_t win = std::int64_t(std::llround(cfg.win_ms * sample_rate / 1000.0));
    std::size_t n = 1;
    while (std::int64_t(n) < win) n <<= 1;
    return n;
  }

  void build_filterbank() {
    const double nyquist = sample_rate_ / 2.0;
    const double fmax = cfg_.fmax > 0 ? cfg_.fmax : nyquist;
    if (!(cfg_.fmin >= 0 && cfg_.fmin < fmax && fmax <= nyquist))
      throw std::invalid_argument("mel: need 0 <= fmin < fmax <= Nyquist");

    const std::size_t n_fft_bins = fft_.size() / 2 + 1;
    const double bin_hz = double(sample_rate_) / double(fft_.size());
    const double mel_lo = hz_to_mel(cfg_.fmin);
    const double mel_hi = hz_to_mel(fmax);
    const double mel_step = (mel_hi - mel_lo) / double(cfg_.n_mels + 1);

    filters_.resize(std::size_t(cfg_.n_mels));
    centers_hz_.resize(std::size_t(cfg_.n_mels));
    for (int m = 0; m < cfg_.n_mels; ++m) {
      const double left = mel_lo + mel_step * m;
      const double center = left + mel_step;
      const double right = center + mel_step;
      centers_hz_[std::size_t(m)] = mel_to_hz(center);

      Filter flt;
      bool open = false;
      for (std::size_t k = 0; k < n_fft_bins; ++k) {
        const double mel_k = hz_to_mel(bin_hz * double(k));
        double wgt = 0.0;
        if (mel_k > left && mel_k < right)
          wgt = mel_k <= center ? (mel_k - left) / mel_step : (right - mel_k) / mel_step;
        if (wgt > 0.0) {
          if (!open) {
            flt.first_bin = k;
            open = true;
          }
          flt.weights.push_back(wgt);
        } else if (open) {
          break;
        }
      }
      // A triangle narrower than the FFT spacing can cover no bin; its energy
      // is then the log floor, which the tolerance-based contract allows.
      filters_[std::size_t(m)] = std::move(flt);
    }
  }

  MelConfig cfg_;
  int sample_rate_;
  Fft fft_;
  std::int64_t win_samples_ = 0;
  std::int64_t hop_samples_ = 0;
  std::vector<double> window_;
  std::vector<Filter> filters_;
  std::vector<double> centers_hz_;
};

inline Spectrogram log_mel(const Waveform& w, const MelConfig& cfg) {
  return MelExtractor(w.sample_rate, cfg).extract(w);
}

// Entrywise (x - mean) / (2 * std).
inline Spectrogram normalize(const Spectrogram& s, double mean, double stddev) {
  if (stddev <= 0) throw std::invalid_argument("normalize: std must be > 0");
  Spectrogram out = s;
  const double inv = 1.0 / (2.0 * stddev);
  for (float& v : out.values) v = float((double(v) - mean) * inv);
  return out;
}

// Pads (with pad_value) or truncates the frame axis to exactly target_frames.
inline Spectrogram pad_or_trim(const Spectrogram& s, std::int64_t target_frames,
                               float pad_value = 0.0f) {
  if (target_frames <= 0) throw std::invalid_argument("pad_or_trim: target_frames must be > 0");
  if (s.frames == target_frames) return s;
  Spectrogram out;
  out.frames = target_frames;
  out.bins = s.bins;
  out.values.assign(std::size_t(target_frames * s.bins), pad_value);
  const std::int64_t keep = std::min(s.frames, target_frames);
  std::memcpy(out.values.data(), s.values.data(), std::size_t(keep * s.bins) * sizeof(float));
  return out;
}

// The value a padded (silent) cell carries after normalization.
inline float silence_value(const MelConfig& cfg, double mean, double stddev) {
  return float((std::log(cfg.log_floor) - mean) / (2.0 * stddev));
}

// --- binary spectrogram file -------------------------------------------------
// 16-byte header: magic "MOSA", u32 frames, u32 bins, u32 reserved; then
// row-major little-endian float32.

inline void write_spectrogram(const std::string& path, const Spectrogram& s) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot create spectrogram file: " + path);
  f.write("MOSA", 4);
  const std::uint32_t frames = std::uint32_t(s.frames), bins = std::uint32_t(s.bins), rsv = 0;
  f.write(reinterpret_cast<const char*>(&frames), 4);
  f.write(reinterpret_cast<const char*>(&bins), 4);
  f.write(reinterpret_cast<const char*>(&rsv), 4);
  f.write(reinterpret_cast<const char*>(s.values.data()),
          std::streamsize(s.values.size() * sizeof(float)));
  if (!f) throw std::runtime_error("short write: " + path);
}

inline Spectrogram read_spectrogram(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open spectrogram file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "MOSA", 4) != 0)
    throw std::runtime_error("bad spectrogram magic: " + path);
  std::uint32_t frames = 0, bins = 0, rsv = 0;
  f.read(reinterpret_cast<char*>(&frames), 4);
  f.read(reinterpret_cast<char*>(&bins), 4);
  f.read(reinterpret_cast<char*>(&rsv), 4);
  Spectrogram s;
  s.frames = frames;
  s.bins = bins;
  s.values.resize(std::size_t(frames) * bins);
  f.read(reinterpret_cast<char*>(s.values.data()), std::streamsize(s.values.size() * sizeof(float)));
  if (!f) throw std::runtime_error("truncated spectrogram file: " + path);
  return s;
}

}  // namespace maskclr
