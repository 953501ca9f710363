// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Wiring between the run configuration and the typed module configs, plus
// the per-clip view preparation path shared by pre-training, probing and
// diagnostics: augment -> log-mel -> normalize -> pad -> patchify -> mask ->
// shuffle -> batched tensors.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/augment.hpp"
#include "maskclr/autodiff.hpp"
#include "maskclr/config.hpp"
#include "maskclr/corpus.hpp"
#include "maskclr/losses.hpp"
#include "maskclr/mel.hpp"
#include "maskclr/model.hpp"
#include "maskclr/optimizer.hpp"
#include "maskclr/patches.hpp"
#include "maskclr/rng.hpp"
#include "maskclr/thread_pool.hpp"

namespace maskclr {

struct Frontend {
  MelConfig mel;
  double norm_mean = -4.268;
  double norm_std = 4.569;
  int sample_rate = 16000;
  AugmentConfig aug;
  bool augment_enabled = true;
  MaskSpec mask;
  int patch_t = 16;
  int patch_f = 16;

  float pad_value() const { return silence_value(mel, norm_mean, norm_std); }

  std::int64_t grid_time() const { return mel.target_frames / patch_t; }
  std::int64_t grid_freq() const { return mel.n_mels / patch_f; }
  std::int64_t grid_tokens() const { return grid_time() * grid_freq(); }
};

inline Frontend frontend_from_config(const Config& c) {
  Frontend f;
  f.mel.n_mels = int(c.get_int("mel.n_mels"));
  f.mel.win_ms = c.get_float("mel.win_ms");
  f.mel.hop_ms = c.get_float("mel.hop_ms");
  f.mel.fmin = c.get_float("mel.fmin");
  f.mel.fmax = c.get_float("mel.fmax");
  f.mel.log_floor = c.get_float("mel.log_floor");
  f.mel.target_frames = int(c.get_int("mel.target_frames"));
  f.norm_mean = c.get_float("mel.mean");
  f.norm_std = c.get_float("mel.std");
  f.augment_enabled = c.get_bool("augment.enabled");
  f.aug.polarity = {c.get_float("augment.polarity_p"), 0, 0};
  f.aug.time_stretch = {c.get_float("augment.stretch_p"), c.get_float("augment.stretch_min"),
                        c.get_float("augment.stretch_max")};
  f.aug.noise_snr = {c.get_float("augment.noise_p"), c.get_float("augment.noise_snr_min"),
                     c.get_float("augment.noise_snr_max")};
  f.aug.gain = {c.get_float("augment.gain_p"), c.get_float("augment.gain_min"),
                c.get_float("augment.gain_max")};
  f.aug.highpass = {c.get_float("augment.highpass_p"), c.get_float("augment.highpass_min"),
                    c.get_float("augment.highpass_max")};
  f.aug.bandstop = {c.get_float("augment.bandstop_p"), c.get_float("augment.bandstop_min"),
                    c.get_float("augment.bandstop_max")};
  f.aug.pitch_shift = {c.get_float("augment.pitch_p"), c.get_float("augment.pitch_min"),
                       c.get_float("augment.pitch_max")};
  f.mask.rho_t = c.get_float("mask.rho_t");
  f.mask.rho_f = c.get_float("mask.rho_f");
  f.mask.rho_u = c.get_float("mask.rho_u");
  f.mask.mode = mask_mode_from_string(c.get_string("mask.mode"));
  f.mask.max_segment = c.get_int("mask.max_segment");
  f.patch_t = int(c.get_int("model.patch_t"));
  f.patch_f = int(c.get_int("model.patch_f"));
  f.mel.validate();
  f.aug.validate();
  f.mask.validate();
  if (f.mel.target_frames % f.patch_t != 0 || f.mel.n_mels % f.patch_f != 0)
    throw ConfigError("mel.target_frames/n_mels must be divisible by the patch size");
  return f;
}

inline EncoderConfig encoder_from_config(const Config& c) {
  EncoderConfig e;
  e.depth = int(c.get_int("model.depth"));
  e.dim = int(c.get_int("model.dim"));
  e.heads = int(c.get_int("model.heads"));
  e.mlp_ratio = int(c.get_int("model.mlp_ratio"));
  e.patch_t = int(c.get_int("model.patch_t"));
  e.patch_f = int(c.get_int("model.patch_f"));
  e.validate();
  return e;
}

inline ProjectionConfig projection_from_config(const Config& c) {
  ProjectionConfig p;
  p.hidden = int(c.get_int("model.proj_hidden"));
  p.out = int(c.get_int("model.proj_out"));
  p.validate();
  return p;
}

// Encoder + projection head + parameter registry, float engine.
struct ModelBundle {
  EncoderConfig enc_cfg;
  ProjectionConfig proj_cfg;
  ParamRegistry<float> reg;
  EncoderParams<float> enc;
  ProjectionParams<float> proj;

  static std::unique_ptr<ModelBundle> create(const EncoderConfig& ec, const ProjectionConfig& pc,
                                             std::uint64_t seed) {
    auto b = std::make_unique<ModelBundle>();
    b->enc_cfg = ec;
    b->proj_cfg = pc;
    Rng rng(seed_mix({seed, stage::kInit}));
    b->enc = EncoderParams<float>::create(ec, b->reg, rng);
    b->proj = ProjectionParams<float>::create(ec.dim, pc, b->reg, rng);
    return b;
  }
};

// --- per-clip preparation -------------------------------------------------------

// Normalized, padded spectrogram for one waveform (no augmentation).
inline Spectrogram prepare_spectrogram(const Frontend& f, const MelExtractor& mel,
                                       const Waveform& w) {
  Spectrogram s = normalize(mel.extract(w), f.norm_mean, f.norm_std);
  return pad_or_trim(s, f.mel.target_frames, f.pad_value());
}

// One contrastive view: augment (optional), spectrogram, mask, shuffle.
inline MaskedView prepare_view(const Frontend& f, const MelExtractor& mel, const Waveform& w,
                               std::uint64_t view_seed, std::optional<MaskMode> mode_override = {}) {
  const Waveform aug = f.augment_enabled ? augment_waveform(w, f.aug, view_seed) : w;
  const Spectrogram s = prepare_spectrogram(f, mel, aug);
  MaskSpec spec = f.mask;
  if (mode_override) spec.mode = *mode_override;
  MaskedView v = mask_view(patchify(s, f.patch_t, f.patch_f), spec, view_seed);
  return shuffle_tokens(v, view_seed);
}

// Packs equally sized views into (B, V, patch_dim) token and (B, V, dim)
// positional tensors. Constants on the tape (no gradients).
inline std::pair<TensorPtr<float>, TensorPtr<float>> views_to_tensors(
    const std::vector<MaskedView>& views, int dim) {
  if (views.empty()) throw std::invalid_argument("views_to_tensors: empty batch");
  const std::int64_t B = std::int64_t(views.size());
  const std::int64_t V = views[0].visible_count();
  const std::int64_t P = views[0].token_dim;
  for (const auto& v : views)
    if (v.visible_count() != V || v.token_dim != P)
      throw std::invalid_argument("views_to_tensors: ragged batch");

  auto tokens = make_tensor<float>({B, V, P});
  auto pos = make_tensor<float>({B, V, dim});
  for (std::int64_t b = 0; b < B; ++b) {
    std::copy(views[std::size_t(b)].tokens.begin(), views[std::size_t(b)].tokens.end(),
              tokens->value.begin() + b * V * P);
    const auto pe = pos_embed_2d(views[std::size_t(b)].coords, dim);
    std::copy(pe.begin(), pe.end(), pos->value.begin() + b * V * dim);
  }
  return {tokens, pos};
}

// --- feature extraction -----------------------------------------------------------

// Pooled per-layer features for the given clips: (layers) x (clips x dim),
// encoder in eval mode. Masking mode none unless overridden (fresh seeds per
// clip when masking is requested). Layer count is depth+1.
struct FeatureSet {
  std::vector<std::vector<float>> layers;  // each: n_clips * dim, row-major
  std::vector<std::int64_t> labels;
  std::int64_t n_clips = 0;
  int dim = 0;

  const float* row(int layer, std::int64_t clip) const {
    return layers[std::size_t(layer)].data() + clip * dim;
  }
};

inline FeatureSet extract_features(ModelBundle& model, const Frontend& f, const Corpus& corpus,
                                   const std::vector<std::int64_t>& indices,
                                   MaskMode inference_mask = MaskMode::kNone,
                                   std::uint64_t seed = 0, std::int64_t chunk = 64) {
  MelExtractor mel(f.sample_rate, f.mel);
  const int depth_plus_one = model.enc_cfg.depth + 1;
  FeatureSet out;
  out.n_clips = std::int64_t(indices.size());
  out.dim = model.enc_cfg.dim;
  out.layers.assign(std::size_t(depth_plus_one),
                    std::vector<float>(std::size_t(out.n_clips * out.dim)));
  out.labels.resize(std::size_t(out.n_clips));

  for (std::int64_t start = 0; start < out.n_clips; start += chunk) {
    const std::int64_t end = std::min(out.n_clips, start + chunk);
    std::vector<MaskedView> views(static_cast<std::size_t>(end - start));
    parallel_for(end - start, 1, [&](std::int64_t i0, std::int64_t i1) {
      for (std::int64_t i = i0; i < i1; ++i) {
        const std::int64_t idx = indices[std::size_t(start + i)];
        const auto& clip = corpus.clips[std::size_t(idx)];
        const Spectrogram s = prepare_spectrogram(f, mel, clip.waveform);
        MaskSpec spec = f.mask;
        spec.mode = inference_mask;
        const std::uint64_t mask_seed = seed_mix({seed, stage::kEval, std::uint64_t(idx)});
        views[std::size_t(i)] = mask_view(patchify(s, f.patch_t, f.patch_f), spec, mask_seed);
      }
    });
    for (std::int64_t i = 0; i < end - start; ++i)
      out.labels[std::size_t(start + i)] = corpus.clips[std::size_t(indices[std::size_t(start + i)])].label;

    auto [tokens, pos] = views_to_tensors(views, model.enc_cfg.dim);
    Tape<float> tape;
    tape.recording = false;
    auto stack = encode(tape, tokens, pos, model.enc);
    for (int l = 0; l < depth_plus_one; ++l) {
      auto pooled = pool(tape, stack, l);
      std::copy(pooled->value.begin(), pooled->value.end(),
                out.layers[std::size_t(l)].begin() + start * out.dim);
    }
  }
  return out;
}

}  // namespace maskclr
