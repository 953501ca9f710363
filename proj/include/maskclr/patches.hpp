// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Spectrogram patch grids and the masking operators that build contrastive
// views: structured time masking (whole patch columns), frequency masking
// (whole patch rows), combined time-frequency masking, and the unstructured
// uniform baseline.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/mel.hpp"
#include "maskclr/rng.hpp"

namespace maskclr {

enum class MaskMode { kNone, kTime, kFreq, kTimeFreq, kUnstructured };

inline MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "none") return MaskMode::kNone;
  if (s == "time") return MaskMode::kTime;
  if (s == "freq") return MaskMode::kFreq;
  if (s == "time_freq") return MaskMode::kTimeFreq;
  if (s == "unstructured") return MaskMode::kUnstructured;
  throw std::invalid_argument("unknown mask mode: " + s);
}

inline std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::kNone: return "none";
    case MaskMode::kTime: return "time";
    case MaskMode::kFreq: return "freq";
    case MaskMode::kTimeFreq: return "time_freq";
    case MaskMode::kUnstructured: return "unstructured";
  }
  return "?";
}

struct MaskSpec {
  double rho_t = 0.6;
  double rho_f = 0.4;
  double rho_u = 0.5;             // unstructured mode only
  MaskMode mode = MaskMode::kTimeFreq;
  std::int64_t max_segment = 0;   // 0 -> ceil(k/2)

  void validate() const {
    for (double r : {rho_t, rho_f, rho_u})
      if (r < 0.0 || r >= 1.0) throw std::invalid_argument("mask: ratios must be in [0,1)");
  }
};

struct PatchGrid {
  std::int64_t time_patches = 0;                    // T_p
  std::int64_t freq_patches = 0;                    // F_p
  std::int64_t patch_t = 0, patch_f = 0;
  std::vector<float> tokens;                        // N x (patch_t*patch_f), row-major
  std::vector<std::pair<std::int64_t, std::int64_t>> coords;  // (time_index, freq_index)

  std::int64_t count() const { return time_patches * freq_patches; }
  std::int64_t token_dim() const { return patch_t * patch_f; }
};

struct MaskedView {
  std::int64_t token_dim = 0;
  std::vector<float> tokens;                        // visible x token_dim
  std::vector<std::pair<std::int64_t, std::int64_t>> coords;

  std::int64_t visible_count() const { return std::int64_t(coords.size()); }
};

// Round half to even.
inline std::int64_t round_ties_even(double x) {
  const double fl = std::floor(x);
  const double frac = x - fl;
  if (frac > 0.5) return std::int64_t(fl) + 1;
  if (frac < 0.5) return std::int64_t(fl);
  const std::int64_t lo = std::int64_t(fl);
  return (lo % 2 == 0) ? lo : lo + 1;
}

// Row-major over (time_index, freq_index); each token is a flattened
// patch_t x patch_f block of the spectrogram.
inline PatchGrid patchify(const Spectrogram& s, std::int64_t patch_t, std::int64_t patch_f) {
  if (patch_t <= 0 || patch_f <= 0 || s.frames % patch_t != 0 || s.bins % patch_f != 0)
    throw std::invalid_argument("patchify: " + std::to_string(s.frames) + "x" +
                                std::to_string(s.bins) + " not divisible by " +
                                std::to_string(patch_t) + "x" + std::to_string(patch_f));
  PatchGrid g;
  g.time_patches = s.frames / patch_t;
  g.freq_patches = s.bins / patch_f;
  g.patch_t = patch_t;
  g.patch_f = patch_f;
  g.tokens.resize(std::size_t(g.count() * g.token_dim()));
  g.coords.resize(std::size_t(g.count()));
  for (std::int64_t tp = 0; tp < g.time_patches; ++tp)
    for (std::int64_t fp = 0; fp < g.freq_patches; ++fp) {
      const std::int64_t n = tp * g.freq_patches + fp;
      g.coords[std::size_t(n)] = {tp, fp};
      float* dst = g.tokens.data() + n * g.token_dim();
      for (std::int64_t i = 0; i < patch_t; ++i)
        for (std::int64_t j = 0; j < patch_f; ++j)
          dst[i * patch_f + j] = s.at(tp * patch_t + i, fp * patch_f + j);
    }
  return g;
}

namespace detail {

// Marks exactly k of n positions as a union of non-overlapping contiguous
// segments. Widths are drawn uniformly in [1, max_segment]; the last segment
// is truncated so the total hits k exactly.
inline std::vector<bool> draw_segments(std::int64_t n, std::int64_t k, std::int64_t max_segment,
                                       Rng& rng) {
  std::vector<bool> marked(std::size_t(n), false);
  if (k <= 0) return marked;
  if (max_segment <= 0) max_segment = (k + 1) / 2;
  std::int64_t count = 0;
  while (count < k) {
    std::int64_t w = rng.uniform_int(1, max_segment);
    w = std::min(w, k - count);
    // candidate starts where the whole segment lands on unmarked positions
    for (; w >= 1; --w) {
      std::vector<std::int64_t> starts;
      std::int64_t run = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        run = marked[std::size_t(i)] ? 0 : run + 1;
        if (run >= w) starts.push_back(i - w + 1);
      }
      if (starts.empty()) continue;
      const std::int64_t s = starts[std::size_t(rng.uniform_int(0, std::int64_t(starts.size()) - 1))];
      for (std::int64_t i = s; i < s + w; ++i) marked[std::size_t(i)] = true;
      count += w;
      break;
    }
  }
  return marked;
}

}  // namespace detail

// Number of whole columns/rows removed for a ratio over a grid extent.
inline std::int64_t mask_count(double rho, std::int64_t extent) {
  return round_ties_even(rho * double(extent));
}

inline MaskedView mask_view(const PatchGrid& g, const MaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<bool> time_masked(std::size_t(g.time_patches), false);
  std::vector<bool> freq_masked(std::size_t(g.freq_patches), false);
  std::vector<bool> token_masked(std::size_t(g.count()), false);

  if (spec.mode == MaskMode::kTime || spec.mode == MaskMode::kTimeFreq) {
    Rng rng(seed_mix({seed, stage::kMask, 0}));
    time_masked = detail::draw_segments(g.time_patches, mask_count(spec.rho_t, g.time_patches),
                                        spec.max_segment, rng);
  }
  if (spec.mode == MaskMode::kFreq || spec.mode == MaskMode::kTimeFreq) {
    Rng rng(seed_mix({seed, stage::kMask, 1}));
    freq_masked = detail::draw_segments(g.freq_patches, mask_count(spec.rho_f, g.freq_patches),
                                        spec.max_segment, rng);
  }
  if (spec.mode == MaskMode::kUnstructured) {
    Rng rng(seed_mix({seed, stage::kMask, 2}));
    const std::int64_t drop = round_ties_even(spec.rho_u * double(g.count()));
    auto perm = rng.permutation(g.count());
    for (std::int64_t i = 0; i < drop; ++i) token_masked[std::size_t(perm[std::size_t(i)])] = true;
  }

  MaskedView v;
  v.token_dim = g.token_dim();
  for (std::int64_t n = 0; n < g.count(); ++n) {
    const auto [tp, fp] = g.coords[std::size_t(n)];
    if (time_masked[std::size_t(tp)] || freq_masked[std::size_t(fp)] || token_masked[std::size_t(n)])
      continue;
    v.coords.push_back({tp, fp});
    v.tokens.insert(v.tokens.end(), g.tokens.begin() + n * g.token_dim(),
                    g.tokens.begin() + (n + 1) * g.token_dim());
  }
  if (v.coords.empty()) throw std::runtime_error("mask_view: spec would mask every token");
  return v;
}

// Fixed sinusoidal 2D positional encoding evaluated at the token's original
// grid coordinate: first half of the channels from the time index, second
// half from the frequency index.
inline std::vector<float> pos_embed_2d(const std::vector<std::pair<std::int64_t, std::int64_t>>& coords,
                                       int dim) {
  if (dim % 4 != 0) throw std::invalid_argument("pos_embed_2d: dim must be divisible by 4");
  const int half = dim / 2, quarter = dim / 4;
  std::vector<float> out(coords.size() * std::size_t(dim));
  for (std::size_t n = 0; n < coords.size(); ++n) {
    float* row = out.data() + n * std::size_t(dim);
    for (int axis = 0; axis < 2; ++axis) {
      const double p = double(axis == 0 ? coords[n].first : coords[n].second);
      float* dst = row + axis * half;
      for (int j = 0; j < quarter; ++j) {
        const double freq = std::pow(10000.0, -double(4 * j) / double(dim));
        dst[2 * j] = float(std::sin(p * freq));
        dst[2 * j + 1] = float(std::cos(p * freq));
      }
    }
  }
  return out;
}

// Fisher-Yates permutation of (token, coord) pairs. Positional information
// travels with the token, so the binding is unchanged.
inline MaskedView shuffle_tokens(const MaskedView& v, std::uint64_t seed) {
  MaskedView out;
  out.token_dim = v.token_dim;
  const std::int64_t n = v.visible_count();
  Rng rng(seed_mix({seed, stage::kShuffle}));
  auto perm = rng.permutation(n);
  out.coords.resize(std::size_t(n));
  out.tokens.resize(v.tokens.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t src = perm[std::size_t(i)];
    out.coords[std::size_t(i)] = v.coords[std::size_t(src)];
    std::copy_n(v.tokens.data() + src * v.token_dim, v.token_dim, out.tokens.data() + i * v.token_dim);
  }
  return out;
}

// Quadratic attention-cost accounting under a visible fraction.
struct AttentionCost {
  double ratio = 1.0;               // quadratic-term ratio (visible_fraction^2)
  std::int64_t total_tokens = 0;
  std::int64_t visible_tokens = 0;
};

inline AttentionCost attention_cost(std::int64_t n_total, double visible_fraction) {
  if (!(visible_fraction > 0.0 && visible_fraction <= 1.0))
    throw std::invalid_argument("attention_cost: visible_fraction must be in (0,1]");
  AttentionCost c;
  c.ratio = visible_fraction * visible_fraction;
  c.total_tokens = n_total;
  c.visible_tokens = std::int64_t(std::llround(visible_fraction * double(n_total)));
  return c;
}

}  // namespace maskclr
