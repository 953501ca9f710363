// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale labeled audio: a deterministic synthetic generator with five
// spectrally and temporally distinct classes, plus ingestion of a WAV
// directory described by a "relative_path,label" manifest.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/audio.hpp"
#include "maskclr/augment.hpp"
#include "maskclr/mel.hpp"
#include "maskclr/rng.hpp"
#include "maskclr/wav.hpp"

namespace maskclr {

struct LabeledClip {
  Waveform waveform;
  std::int64_t label = 0;
  std::string id;
};

struct Corpus {
  std::vector<LabeledClip> clips;
  std::vector<std::string> class_names;

  std::int64_t size() const { return std::int64_t(clips.size()); }
  std::int64_t n_classes() const { return std::int64_t(class_names.size()); }
};

struct SynthSpec {
  std::int64_t clips_per_class = 100;
  double duration_s = 1.0;
  int sample_rate = 16000;
  // jitter ranges
  double level_lo = 0.5, level_hi = 0.8;  // peak amplitude target, <= 0.9

  void validate() const {
    if (clips_per_class < 1) throw std::invalid_argument("synth: clips_per_class must be >= 1");
    if (duration_s * sample_rate < 400) throw std::invalid_argument("synth: clip shorter than one window");
    if (level_hi > 0.9) throw std::invalid_argument("synth: level jitter exceeds 0.9 headroom");
  }
};

namespace detail {

inline const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names = {"pure_tone", "harmonic_stack", "linear_chirp",
                                                 "band_noise", "am_tone"};
  return names;
}

inline void scale_to_peak(std::vector<float>& x, double target) {
  const double peak = double(peak_amplitude(x));
  if (peak <= 0.0) return;
  const float s = float(target / peak);
  for (float& v : x) v *= s;
}

inline Waveform synth_clip(std::int64_t cls, const SynthSpec& spec, Rng& rng) {
  const std::int64_t n = std::int64_t(std::llround(spec.duration_s * spec.sample_rate));
  const double fs = spec.sample_rate;
  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples.resize(std::size_t(n));
  const double level = rng.uniform(spec.level_lo, spec.level_hi);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);

  switch (cls) {
    case 0: {  // pure tone
      const double f0 = rng.uniform(300.0, 600.0);
      for (std::int64_t i = 0; i < n; ++i)
        w.samples[std::size_t(i)] = float(std::sin(2.0 * M_PI * f0 * double(i) / fs + phase));
      break;
    }
    case 1: {  // harmonic stack, 4 partials at 1/k amplitude
      const double f0 = rng.uniform(150.0, 300.0);
      for (std::int64_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (int k = 1; k <= 4; ++k)
          v += std::sin(2.0 * M_PI * f0 * k * double(i) / fs + phase * k) / double(k);
        w.samples[std::size_t(i)] = float(v);
      }
      break;
    }
    case 2: {  // linear chirp sweeping upward across the band
      const double f_lo = 200.0 * rng.uniform(0.9, 1.1);
      const double f_hi = 4000.0 * rng.uniform(0.9, 1.1);
      for (std::int64_t i = 0; i < n; ++i) {
        const double t = double(i) / fs;
        const double dur = double(n) / fs;
        const double ph = 2.0 * M_PI * (f_lo * t + 0.5 * (f_hi - f_lo) * t * t / dur);
        w.samples[std::size_t(i)] = float(std::sin(ph + phase));
      }
      break;
    }
    case 3: {  // noise band-passed around a random center, ~1 octave wide
      const double fc = rng.uniform(400.0, 3000.0);
      for (std::int64_t i = 0; i < n; ++i) w.samples[std::size_t(i)] = float(rng.gaussian());
      // cascade of (bandpass = highpass then complementary lowpass-ish notch
      // inversion) kept simple: two biquad passes sharpen the band
      const double q = 1.0 / std::sqrt(2.0);
      const double w0 = 2.0 * M_PI * fc / fs;
      const double alpha = std::sin(w0) / (2.0 * q);
      const double c = std::cos(w0);
      const double a0 = 1.0 + alpha;
      Biquad bp;  // RBJ constant-skirt bandpass
      bp.b0 = alpha / a0;
      bp.b1 = 0.0;
      bp.b2 = -alpha / a0;
      bp.a1 = -2.0 * c / a0;
      bp.a2 = (1.0 - alpha) / a0;
      bp.apply(w.samples);
      bp.apply(w.samples);
      break;
    }
    case 4: {  // amplitude-modulated tone, 4-8 Hz envelope
      const double fc = rng.uniform(500.0, 1500.0);
      const double fm = rng.uniform(4.0, 8.0);
      const double depth = 0.9;
      for (std::int64_t i = 0; i < n; ++i) {
        const double t = double(i) / fs;
        const double env = (1.0 + depth * std::sin(2.0 * M_PI * fm * t)) / (1.0 + depth);
        w.samples[std::size_t(i)] = float(env * std::sin(2.0 * M_PI * fc * t + phase));
      }
      break;
    }
    default:
      throw std::out_of_range("synth: unknown class " + std::to_string(cls));
  }
  scale_to_peak(w.samples, level);
  return w;
}

}  // namespace detail

// Deterministic per (spec, seed): clip i of class c depends only on those
// three values.
inline Corpus generate_corpus(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Corpus corpus;
  corpus.class_names = detail::synth_class_names();
  for (std::int64_t c = 0; c < corpus.n_classes(); ++c)
    for (std::int64_t i = 0; i < spec.clips_per_class; ++i) {
      Rng rng(seed_mix({seed, stage::kCorpus, std::uint64_t(c), std::uint64_t(i)}));
      LabeledClip clip;
      clip.waveform = detail::synth_clip(c, spec, rng);
      clip.label = c;
      clip.id = corpus.class_names[std::size_t(c)] + "_" + std::to_string(i);
      corpus.clips.push_back(std::move(clip));
    }
  return corpus;
}

// Loads "relative_path,label" rows; labels are indexed by order of first
// appearance. Files are resampled to 16 kHz mono.
inline Corpus ingest_corpus(const std::string& dir, const std::string& manifest_csv,
                            int target_rate = 16000) {
  std::ifstream mf(manifest_csv);
  if (!mf) throw std::runtime_error("cannot open manifest: " + manifest_csv);
  Corpus corpus;
  std::map<std::string, std::int64_t> label_index;
  std::string line;
  std::int64_t row = 0;
  while (std::getline(mf, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 >= line.size())
      throw std::runtime_error("unparsable manifest row " + std::to_string(row) + ": " + line);
    const std::string rel = line.substr(0, comma);
    const std::string label = line.substr(comma + 1);
    const std::string path = (std::filesystem::path(dir) / rel).string();
    if (!std::filesystem::exists(path))
      throw std::runtime_error("manifest references missing file: " + path);
    auto [it, inserted] = label_index.try_emplace(label, std::int64_t(corpus.class_names.size()));
    if (inserted) corpus.class_names.push_back(label);
    LabeledClip clip;
    clip.waveform = resample_linear(read_wav(path), target_rate);
    clip.label = it->second;
    clip.id = rel;
    corpus.clips.push_back(std::move(clip));
  }
  if (corpus.clips.empty()) throw std::runtime_error("empty manifest: " + manifest_csv);
  return corpus;
}

// Writes every clip as <id>.wav plus manifest.csv into dir.
inline void export_corpus(const Corpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream mf(std::filesystem::path(dir) / "manifest.csv");
  if (!mf) throw std::runtime_error("cannot create manifest in " + dir);
  for (const auto& clip : corpus.clips) {
    const std::string file = clip.id + ".wav";
    write_wav((std::filesystem::path(dir) / file).string(), clip.waveform);
    mf << file << "," << corpus.class_names[std::size_t(clip.label)] << "\n";
  }
}

// Seeded 80/20 split; disjoint and stable for a given (corpus size, seed).
struct Split {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> test;
};

inline Split split_corpus(std::int64_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must be in (0,1)");
  Rng rng(seed_mix({seed, stage::kSplit}));
  auto perm = rng.permutation(n);
  const std::int64_t n_train = std::int64_t(std::llround(train_fraction * double(n)));
  Split s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.test.assign(perm.begin() + n_train, perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// Two-pass mean / stddev over every log-mel cell of the corpus; used to pin
// normalization constants for a generated corpus.
inline std::pair<double, double> corpus_mel_stats(const Corpus& corpus, const MelConfig& cfg) {
  if (corpus.clips.empty()) throw std::invalid_argument("mel stats: empty corpus");
  MelExtractor mel(corpus.clips[0].waveform.sample_rate, cfg);
  double sum = 0.0;
  std::int64_t count = 0;
  std::vector<Spectrogram> specs;
  specs.reserve(corpus.clips.size());
  for (const auto& clip : corpus.clips) {
    specs.push_back(mel.extract(clip.waveform));
    for (float v : specs.back().values) sum += double(v);
    count += specs.back().frames * specs.back().bins;
  }
  const double mean = sum / double(count);
  double var = 0.0;
  for (const auto& s : specs)
    for (float v : s.values) var += (double(v) - mean) * (double(v) - mean);
  var /= double(count);
  return {mean, std::sqrt(var)};
}

}  // namespace maskclr
