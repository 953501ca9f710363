// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/model.hpp"

namespace maskclr {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled; applied only to decay-eligible params
};

// AdamW with decoupled weight decay applied before the moment update.
// Parameters flagged decay=false in the registry (biases, norm scales) are
// exempt.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }

  void step(ParamRegistry<T>& reg, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
    for (const auto& e : reg.entries()) {
      if (!e.trainable) continue;
      auto& p = *e.tensor;
      if (p.grad.empty()) p.ensure_grad();
      Moments& m = moments(e.name, p.numel());
      const double wd = e.decay ? cfg_.weight_decay : 0.0;
      for (std::int64_t i = 0; i < p.numel(); ++i) {
        const double g = double(p.grad[std::size_t(i)]);
        if (!std::isfinite(g))
          throw std::runtime_error("adamw: non-finite gradient in parameter " + e.name);
        double v = double(p.value[std::size_t(i)]);
        if (wd != 0.0) v -= lr * wd * v;
        const double m1 = cfg_.beta1 * m.m[std::size_t(i)] + (1.0 - cfg_.beta1) * g;
        const double m2 = cfg_.beta2 * m.v[std::size_t(i)] + (1.0 - cfg_.beta2) * g * g;
        m.m[std::size_t(i)] = m1;
        m.v[std::size_t(i)] = m2;
        v -= lr * (m1 / bc1) / (std::sqrt(m2 / bc2) + cfg_.eps);
        p.value[std::size_t(i)] = T(v);
      }
    }
  }

  // Moment arrays exposed for checkpointing, keyed by parameter name.
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments>& state() { return state_; }
  const std::map<std::string, Moments>& state() const { return state_; }

 private:
  Moments& moments(const std::string& name, std::int64_t n) {
    auto& s = state_[name];
    if (std::int64_t(s.m.size()) != n) {
      s.m.assign(std::size_t(n), 0.0);
      s.v.assign(std::size_t(n), 0.0);
    }
    return s;
  }

  AdamWConfig cfg_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments> state_;
};

enum class ScheduleMode { kFixed, kWarmupCosine };

struct ScheduleConfig {
  ScheduleMode mode = ScheduleMode::kFixed;
  double base_lr = 6e-4;
  double min_lr = 1e-6;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;
};

// Fixed mode returns base_lr for every step. Warmup-cosine ramps linearly to
// base_lr over the warmup steps and then follows a half-cycle cosine down to
// min_lr at the final step.
inline double lr_at(std::int64_t step, const ScheduleConfig& s) {
  if (step < 0) throw std::invalid_argument("lr_at: step must be >= 0");
  if (s.mode == ScheduleMode::kFixed) return s.base_lr;
  if (step < s.warmup_steps) return s.base_lr * double(step + 1) / double(s.warmup_steps);
  const std::int64_t span = std::max<std::int64_t>(1, s.total_steps - 1 - s.warmup_steps);
  const double progress = std::min(1.0, double(step - s.warmup_steps) / double(span));
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(M_PI * progress));
}

}  // namespace maskclr
