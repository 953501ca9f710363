// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Probing protocols over frozen, cached features: last-layer linear,
// single-layer linear, softmax-weighted sum over layers, and a single-query
// attentive probe. Classifier weights start at zero, which makes probe
// accuracy exactly invariant under consistent class relabeling.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/autodiff.hpp"
#include "maskclr/model.hpp"
#include "maskclr/optimizer.hpp"
#include "maskclr/pipeline.hpp"
#include "maskclr/rng.hpp"

namespace maskclr {

enum class ProbeKind { kLinearLast, kLinearLayer, kWeightedSum, kAttentive };

inline ProbeKind probe_kind_from_string(const std::string& s) {
  if (s == "last") return ProbeKind::kLinearLast;
  if (s == "layer") return ProbeKind::kLinearLayer;
  if (s == "weighted") return ProbeKind::kWeightedSum;
  if (s == "attentive") return ProbeKind::kAttentive;
  throw std::invalid_argument("unknown probe kind: " + s);
}

inline std::string to_string(ProbeKind k) {
  switch (k) {
    case ProbeKind::kLinearLast: return "last";
    case ProbeKind::kLinearLayer: return "layer";
    case ProbeKind::kWeightedSum: return "weighted";
    case ProbeKind::kAttentive: return "attentive";
  }
  return "?";
}

struct ProbeConfig {
  ProbeKind kind = ProbeKind::kLinearLast;
  int layer = -1;  // kLinearLayer only
  std::int64_t epochs = 40;
  double lr = 1e-3;
  std::int64_t batch = 32;
  std::uint64_t seed = 1;
  int attn_dim = 64;
  // Test hook: freeze the weighted-sum mix one-hot on this layer instead of
  // learning it.
  int frozen_onehot_layer = -1;
};

struct ProbeResult {
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  std::vector<double> layer_weights;  // weighted-sum mix after softmax
};

namespace detail {

// (nb, dim) constant from one feature layer.
inline TensorPtr<float> batch_rows(const FeatureSet& f, int layer,
                                   const std::vector<std::int64_t>& idx) {
  auto t = make_tensor<float>({std::int64_t(idx.size()), f.dim});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(f.row(layer, idx[i]), f.dim, t->value.begin() + std::int64_t(i) * f.dim);
  return t;
}

// (L, nb*dim) constant: row l holds the batch features of layer l.
inline TensorPtr<float> batch_layers_flat(const FeatureSet& f, const std::vector<std::int64_t>& idx) {
  const std::int64_t L = std::int64_t(f.layers.size());
  const std::int64_t nb = std::int64_t(idx.size());
  auto t = make_tensor<float>({L, nb * f.dim});
  for (std::int64_t l = 0; l < L; ++l)
    for (std::int64_t i = 0; i < nb; ++i)
      std::copy_n(f.row(int(l), idx[std::size_t(i)]), f.dim,
                  t->value.begin() + l * nb * f.dim + i * f.dim);
  return t;
}

// (nb, L, dim) constant for the attentive probe.
inline TensorPtr<float> batch_layers_3d(const FeatureSet& f, const std::vector<std::int64_t>& idx) {
  const std::int64_t L = std::int64_t(f.layers.size());
  const std::int64_t nb = std::int64_t(idx.size());
  auto t = make_tensor<float>({nb, L, f.dim});
  for (std::int64_t i = 0; i < nb; ++i)
    for (std::int64_t l = 0; l < L; ++l)
      std::copy_n(f.row(int(l), idx[std::size_t(i)]), f.dim,
                  t->value.begin() + (i * L + l) * f.dim);
  return t;
}

}  // namespace detail

inline ProbeResult train_probe(const FeatureSet& feats, const std::vector<std::int64_t>& train_idx,
                               const std::vector<std::int64_t>& test_idx, std::int64_t n_classes,
                               const ProbeConfig& cfg) {
  if (n_classes < 2) throw std::invalid_argument("probe: need at least two classes");
  const std::int64_t L = std::int64_t(feats.layers.size());
  int layer = cfg.layer;
  if (cfg.kind == ProbeKind::kLinearLast) layer = int(L - 1);
  if (cfg.kind == ProbeKind::kLinearLayer && (layer < 0 || layer >= L))
    throw std::out_of_range("probe: layer " + std::to_string(layer) + " of " + std::to_string(L));

  ParamRegistry<float> reg;
  Rng rng(seed_mix({cfg.seed, stage::kInit, 77}));
  auto cls_w = reg.add("probe.cls.w", {feats.dim, n_classes}, true);
  auto cls_b = reg.add("probe.cls.b", {n_classes}, false);

  TensorPtr<float> mix_w, query, key_w, key_b;
  if (cfg.kind == ProbeKind::kWeightedSum && cfg.frozen_onehot_layer < 0)
    mix_w = reg.add("probe.mix.w", {L}, false);
  if (cfg.kind == ProbeKind::kAttentive) {
    query = reg.add("probe.attn.q", {cfg.attn_dim}, false);
    init::trunc_normal(query, 0.02, rng);
    key_w = reg.add("probe.attn.key.w", {feats.dim, cfg.attn_dim}, true);
    init::trunc_normal(key_w, 0.02, rng);
    key_b = reg.add("probe.attn.key.b", {cfg.attn_dim}, false);
  }

  // Builds logits for a batch of feature rows; shared by train and eval.
  auto forward = [&](Tape<float>& tape, const std::vector<std::int64_t>& idx) -> TensorPtr<float> {
    const std::int64_t nb = std::int64_t(idx.size());
    TensorPtr<float> rep;
    switch (cfg.kind) {
      case ProbeKind::kLinearLast:
      case ProbeKind::kLinearLayer:
        rep = detail::batch_rows(feats, layer, idx);
        break;
      case ProbeKind::kWeightedSum: {
        auto flat = detail::batch_layers_flat(feats, idx);  // (L, nb*dim)
        TensorPtr<float> alpha;
        if (cfg.frozen_onehot_layer >= 0) {
          alpha = make_tensor<float>({1, L});
          alpha->value[std::size_t(cfg.frozen_onehot_layer)] = 1.0f;
        } else {
          alpha = tape.reshape(tape.softmax(mix_w, 0), {1, L});
        }
        rep = tape.reshape(tape.matmul(alpha, flat), {nb, feats.dim});
        break;
      }
      case ProbeKind::kAttentive: {
        auto f3 = detail::batch_layers_3d(feats, idx);                     // (nb, L, dim)
        auto flat = tape.reshape(f3, {nb * L, feats.dim});
        auto keys = tape.add_bias(tape.matmul(flat, key_w), key_b);        // (nb*L, a)
        auto scores = tape.matmul(keys, tape.reshape(query, {cfg.attn_dim, 1}));
        scores = tape.scale(tape.reshape(scores, {nb, L}), float(1.0 / std::sqrt(double(cfg.attn_dim))));
        auto attn = tape.softmax(scores, 1);                               // (nb, L)
        rep = tape.reshape(tape.bmm(tape.reshape(attn, {nb, 1, L}), f3), {nb, feats.dim});
        break;
      }
    }
    return tape.add_bias(tape.matmul(rep, cls_w), cls_b);
  };

  auto evaluate = [&](const std::vector<std::int64_t>& idx) {
    if (idx.empty()) return 0.0;
    std::int64_t hit = 0;
    for (std::int64_t start = 0; start < std::int64_t(idx.size()); start += cfg.batch) {
      const auto end = std::min<std::int64_t>(std::int64_t(idx.size()), start + cfg.batch);
      std::vector<std::int64_t> chunk(idx.begin() + start, idx.begin() + end);
      Tape<float> tape;
      tape.recording = false;
      auto logits = forward(tape, chunk);
      for (std::int64_t i = 0; i < std::int64_t(chunk.size()); ++i) {
        std::int64_t best = 0;
        for (std::int64_t c = 1; c < n_classes; ++c)
          if (logits->value[std::size_t(i * n_classes + c)] >
              logits->value[std::size_t(i * n_classes + best)])
            best = c;
        hit += best == feats.labels[std::size_t(chunk[std::size_t(i)])];
      }
    }
    return double(hit) / double(idx.size());
  };

  // Degenerate split guard: training labels must span more than one class.
  {
    std::int64_t first = feats.labels[std::size_t(train_idx.at(0))];
    bool varied = false;
    for (auto i : train_idx) varied |= feats.labels[std::size_t(i)] != first;
    if (!varied) throw std::invalid_argument("probe: training split contains a single class");
  }

  AdamW<float> opt;
  for (std::int64_t ep = 0; ep < cfg.epochs; ++ep) {
    std::vector<std::int64_t> order = train_idx;
    Rng shuffle_rng(seed_mix({cfg.seed, stage::kBatchOrder, std::uint64_t(ep), 13}));
    shuffle_rng.shuffle(order);
    for (std::int64_t start = 0; start < std::int64_t(order.size()); start += cfg.batch) {
      const auto end = std::min<std::int64_t>(std::int64_t(order.size()), start + cfg.batch);
      std::vector<std::int64_t> chunk(order.begin() + start, order.begin() + end);
      std::vector<std::int64_t> labels(chunk.size());
      for (std::size_t i = 0; i < chunk.size(); ++i)
        labels[i] = feats.labels[std::size_t(chunk[i])];
      Tape<float> tape;
      auto loss = tape.cross_entropy(forward(tape, chunk), labels);
      reg.zero_grads();
      tape.backward(loss);
      opt.step(reg, cfg.lr);
    }
  }

  ProbeResult result;
  result.train_accuracy = evaluate(train_idx);
  result.test_accuracy = evaluate(test_idx);
  if (cfg.kind == ProbeKind::kWeightedSum) {
    result.layer_weights.resize(std::size_t(L));
    if (cfg.frozen_onehot_layer >= 0) {
      result.layer_weights[std::size_t(cfg.frozen_onehot_layer)] = 1.0;
    } else {
      double mx = -1e30;
      for (float v : mix_w->value) mx = std::max(mx, double(v));
      double denom = 0.0;
      for (float v : mix_w->value) denom += std::exp(double(v) - mx);
      for (std::size_t i = 0; i < result.layer_weights.size(); ++i)
        result.layer_weights[i] = std::exp(double(mix_w->value[i]) - mx) / denom;
    }
  }
  return result;
}

}  // namespace maskclr
