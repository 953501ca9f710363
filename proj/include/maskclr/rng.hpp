// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace maskclr {

// splitmix64 finalizer. Used both as the PRNG step and as the seed mixer so
// every derived stream is a pure function of the integers that name it.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Folds a list of integers (master seed, epoch, item, view, stage, ...) into
// one stream seed. Order-sensitive.
inline std::uint64_t seed_mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

// Stage salts for per-item stream derivation. Values are arbitrary but fixed:
// changing them changes every seeded draw in the pipeline.
namespace stage {
constexpr std::uint64_t kAugment = 0xA1;
constexpr std::uint64_t kMask = 0xA2;
constexpr std::uint64_t kShuffle = 0xA3;
constexpr std::uint64_t kBatchOrder = 0xA4;
constexpr std::uint64_t kInit = 0xA5;
constexpr std::uint64_t kRoll = 0xA6;
constexpr std::uint64_t kSpecAug = 0xA7;
constexpr std::uint64_t kCorpus = 0xA8;
constexpr std::uint64_t kSplit = 0xA9;
constexpr std::uint64_t kEval = 0xAA;
}  // namespace stage

// Deterministic, platform-independent PRNG (counter-based splitmix64).
// std::mt19937 + <random> distributions are avoided on purpose: distribution
// output is implementation-defined and would break cross-toolchain
// reproducibility of seeded runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + std::int64_t(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; draws two uniforms per call, no cached spare, so the stream
  // position is a fixed function of the call count.
  double gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Truncated normal: resample outside [-2sigma, 2sigma].
  double trunc_gaussian(double sigma) {
    for (;;) {
      const double g = gaussian();
      if (std::fabs(g) <= 2.0) return g * sigma;
    }
  }

  // Fisher-Yates.
  template <typename V>
  void shuffle(V& v) {
    for (std::int64_t i = std::int64_t(v.size()) - 1; i > 0; --i) {
      const std::int64_t j = uniform_int(0, i);
      std::swap(v[i], v[j]);
    }
  }

  std::vector<std::int64_t> permutation(std::int64_t n) {
    std::vector<std::int64_t> p(n);
    for (std::int64_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

 private:
  std::uint64_t state_;
};

}  // namespace maskclr
