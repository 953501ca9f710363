// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loops: contrastive pre-training over paired masked views, and
// supervised training (frozen linear probe or full fine-tune) on top of a
// pre-trained encoder. Also the spectrogram-level SpecAugment used only for
// fine-tuning.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "maskclr/checkpoint.hpp"
#include "maskclr/io_util.hpp"
#include "maskclr/pipeline.hpp"

namespace maskclr {

struct RunSettings {
  std::int64_t steps = 2000;
  std::int64_t batch = 64;
  std::uint64_t seed = 1;
  bool deterministic = true;
  int threads = 0;
  std::int64_t checkpoint_every = 500;
  std::string out_dir = "runs/default";
  double tau = 0.1;
  double lr = 6e-4;
  AdamWConfig adamw;
  ScheduleMode schedule = ScheduleMode::kFixed;
  double warmup_epochs = 1.0;
  double min_lr = 1e-6;
};

inline RunSettings run_settings_from_config(const Config& c) {
  RunSettings r;
  r.steps = c.get_int("run.steps");
  r.batch = c.get_int("run.batch");
  r.seed = std::uint64_t(c.get_int("run.seed"));
  r.deterministic = c.get_bool("run.deterministic");
  r.threads = int(c.get_int("run.threads"));
  r.checkpoint_every = c.get_int("run.checkpoint_every");
  r.out_dir = c.get_string("run.out_dir");
  r.tau = c.get_float("loss.tau");
  r.lr = c.get_float("optim.lr");
  r.adamw.beta1 = c.get_float("optim.beta1");
  r.adamw.beta2 = c.get_float("optim.beta2");
  r.adamw.eps = c.get_float("optim.eps");
  r.adamw.weight_decay = c.get_float("optim.weight_decay");
  r.schedule = c.get_string("optim.schedule") == "warmup_cosine" ? ScheduleMode::kWarmupCosine
                                                                 : ScheduleMode::kFixed;
  r.warmup_epochs = c.get_float("optim.warmup_epochs");
  r.min_lr = c.get_float("optim.min_lr");
  if (r.batch < 2) throw ConfigError("run.batch must be >= 2 (batch statistics)");
  if (r.steps < 1) throw ConfigError("run.steps must be >= 1");
  return r;
}

inline void apply_thread_setting(int threads) {
  if (threads > 0)
    ThreadPool::instance().set_threads(threads);
}

// --- fine-tune-time spectrogram masking -----------------------------------------

// Zero-fills (with the silence value) one time band of width U{0..max_t} and
// one frequency band of width U{0..max_f}.
inline Spectrogram spec_augment(const Spectrogram& s, std::int64_t max_t, std::int64_t max_f,
                                float silence, std::uint64_t seed) {
  if (max_t >= s.frames || max_f >= s.bins)
    throw std::invalid_argument("spec_augment: band limits must be smaller than the spectrogram");
  Spectrogram out = s;
  Rng rng(seed_mix({seed, stage::kSpecAug}));
  const std::int64_t wt = max_t > 0 ? rng.uniform_int(0, max_t) : 0;
  if (wt > 0) {
    const std::int64_t t0 = rng.uniform_int(0, s.frames - wt);
    for (std::int64_t t = t0; t < t0 + wt; ++t)
      for (std::int64_t f = 0; f < s.bins; ++f) out.at(t, f) = silence;
  }
  const std::int64_t wf = max_f > 0 ? rng.uniform_int(0, max_f) : 0;
  if (wf > 0) {
    const std::int64_t f0 = rng.uniform_int(0, s.bins - wf);
    for (std::int64_t f = f0; f < f0 + wf; ++f)
      for (std::int64_t t = 0; t < s.frames; ++t) out.at(t, f) = silence;
  }
  return out;
}

// --- contrastive pre-training -----------------------------------------------------

struct PretrainResult {
  std::string checkpoint_stem;
  double step0_loss = 0.0;
  double final_window_mean = 0.0;  // trailing 100-step mean
  std::vector<double> losses;
};

// Per step: each clip spawns two augmentation seeds -> two views, both masked
// with the configured mode under independent seeds, shuffled, encoded by the
// shared encoder, pooled, projected through one head over the concatenated
// 2B batch, and pulled together by the symmetric InfoNCE loss.
inline PretrainResult pretrain(const Config& cfg, const Corpus& corpus, ModelBundle& model,
                               JsonlWriter& metrics) {
  const Frontend frontend = frontend_from_config(cfg);
  const RunSettings run = run_settings_from_config(cfg);
  apply_thread_setting(run.threads);
  if (corpus.size() == 0) throw std::runtime_error("pretrain: empty corpus");
  if (corpus.size() < run.batch)
    throw std::runtime_error("pretrain: corpus smaller than one batch");

  MelExtractor mel(frontend.sample_rate, frontend.mel);
  AdamW<float> opt(run.adamw);
  const std::int64_t steps_per_epoch = std::max<std::int64_t>(1, corpus.size() / run.batch);
  ScheduleConfig sched{run.schedule, run.lr, run.min_lr,
                       std::int64_t(std::llround(run.warmup_epochs * double(steps_per_epoch))),
                       run.steps};

  std::filesystem::create_directories(run.out_dir);
  const std::string stem = (std::filesystem::path(run.out_dir) / "checkpoint").string();

  PretrainResult result;
  result.checkpoint_stem = stem;

  std::vector<std::int64_t> epoch_order;
  std::int64_t epoch = -1;

  auto save = [&](std::int64_t step) {
    CheckpointData d;
    d.step = step;
    d.rng_state = run.seed;
    d.config_lines = cfg.snapshot_lines();
    collect_registry(model.reg, d);
    collect_optimizer(opt, d);
    save_checkpoint(stem, d);
  };

  for (std::int64_t step = 0; step < run.steps; ++step) {
    const auto t_start = std::chrono::steady_clock::now();
    const std::int64_t step_epoch = step / steps_per_epoch;
    if (step_epoch != epoch) {
      epoch = step_epoch;
      Rng rng(seed_mix({run.seed, stage::kBatchOrder, std::uint64_t(epoch)}));
      epoch_order = rng.permutation(corpus.size());
    }
    const std::int64_t offset = (step % steps_per_epoch) * run.batch;

    // Data preparation, parallel across views with per-item seeds. Layout:
    // rows [0,B) are view 0 of each clip, rows [B,2B) view 1.
    const std::int64_t B = run.batch;
    std::vector<MaskedView> views(static_cast<std::size_t>(2 * B));
    parallel_for(2 * B, 1, [&](std::int64_t i0, std::int64_t i1) {
      for (std::int64_t i = i0; i < i1; ++i) {
        const std::int64_t item = i % B;
        const std::uint64_t view_id = std::uint64_t(i / B);
        const std::int64_t clip_idx = epoch_order[std::size_t((offset + item) % corpus.size())];
        const std::uint64_t view_seed = seed_mix({run.seed, std::uint64_t(epoch),
                                                  std::uint64_t(clip_idx), view_id});
        views[std::size_t(i)] = prepare_view(frontend, mel, corpus.clips[std::size_t(clip_idx)].waveform,
                                             view_seed);
      }
    });
    const std::int64_t visible = views[0].visible_count();

    auto [tokens, pos] = views_to_tensors(views, model.enc_cfg.dim);
    Tape<float> tape;
    auto stack = encode(tape, tokens, pos, model.enc);
    auto pooled = pool(tape, stack);                       // (2B, dim)
    auto z = project(tape, pooled, model.proj, /*train=*/true);
    auto zt = tape.slice_rows(z, 0, B);
    auto zf = tape.slice_rows(z, B, 2 * B);
    auto loss = info_nce(tape, zt, zf, run.tau);
    const double loss_v = double(loss->value[0]);
    if (!std::isfinite(loss_v))
      throw std::runtime_error("pretrain: non-finite loss at step " + std::to_string(step));

    model.reg.zero_grads();
    tape.backward(loss);
    const double lr = lr_at(step, sched);
    opt.step(model.reg, lr);

    if (step == 0) result.step0_loss = loss_v;
    result.losses.push_back(loss_v);

    const double secs =
        run.deterministic
            ? 0.0
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    metrics.write({{"step", std::to_string(step)},
                   {"loss", fmt_double(loss_v)},
                   {"lr", fmt_double(lr)},
                   {"visible_tokens", std::to_string(visible)},
                   {"seconds", fmt_double(secs)}});

    if (run.checkpoint_every > 0 && (step + 1) % run.checkpoint_every == 0) save(step + 1);
  }
  save(run.steps);

  const std::size_t window = std::min<std::size_t>(100, result.losses.size());
  double acc = 0.0;
  for (std::size_t i = result.losses.size() - window; i < result.losses.size(); ++i)
    acc += result.losses[i];
  result.final_window_mean = acc / double(window);
  return result;
}

// --- supervised training ------------------------------------------------------------

enum class SupervisedMode { kProbeFrozen, kFinetune };

struct SupervisedResult {
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  double init_test_accuracy = 0.0;  // before any update
};

namespace detail {

inline std::int64_t argmax_row(const TensorPtr<float>& logits, std::int64_t row) {
  const std::int64_t C = logits->dim(1);
  std::int64_t best = 0;
  for (std::int64_t c = 1; c < C; ++c)
    if (logits->value[std::size_t(row * C + c)] > logits->value[std::size_t(row * C + best)]) best = c;
  return best;
}

}  // namespace detail

// probe_frozen: the encoder runs in eval mode and only a linear classifier
// trains on pooled last-layer features (cached once unless cyclic roll
// refreshes them each epoch). finetune: everything updates, with optional
// cyclic roll and SpecAugment. No contrastive masking downstream.
inline SupervisedResult train_supervised(SupervisedMode mode, const Config& cfg,
                                         const Corpus& corpus, ModelBundle& model) {
  const Frontend frontend = frontend_from_config(cfg);
  const RunSettings run = run_settings_from_config(cfg);
  apply_thread_setting(run.threads);
  const std::int64_t epochs = cfg.get_int("sup.epochs");
  const double lr = cfg.get_float("sup.lr");
  const std::int64_t batch = cfg.get_int("sup.batch");
  const bool roll = cfg.get_bool("sup.roll");
  const std::int64_t specaug_t = cfg.get_int("sup.specaug_t");
  const std::int64_t specaug_f = cfg.get_int("sup.specaug_f");
  const bool finetune = mode == SupervisedMode::kFinetune;

  const Split split = split_corpus(corpus.size(), cfg.get_float("corpus.train_fraction"), run.seed);
  MelExtractor mel(frontend.sample_rate, frontend.mel);

  // Zero-initialized classifier: deterministic and symmetric under class
  // relabeling.
  ParamRegistry<float> head_reg;
  Rng head_rng(seed_mix({run.seed, stage::kInit, 3}));
  auto head = ClassifierParams<float>::create(model.enc_cfg.dim, int(corpus.n_classes()), head_reg,
                                              head_rng);
  init::constant(head.w, 0.0f);

  AdamW<float> head_opt(run.adamw);
  AdamW<float> enc_opt(run.adamw);

  std::vector<std::int64_t> all(std::size_t(corpus.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = std::int64_t(i);

  // --- frozen probe path: classifier over cached pooled features -------------
  if (!finetune) {
    FeatureSet feats = extract_features(model, frontend, corpus, all);
    auto last = [&feats](std::int64_t clip) {
      return feats.row(int(feats.layers.size()) - 1, clip);
    };
    auto feature_batch = [&](const std::vector<std::int64_t>& idxs) {
      auto t = make_tensor<float>({std::int64_t(idxs.size()), feats.dim});
      for (std::size_t i = 0; i < idxs.size(); ++i)
        std::copy_n(last(idxs[i]), feats.dim, t->value.begin() + std::int64_t(i) * feats.dim);
      return t;
    };
    auto evaluate = [&](const std::vector<std::int64_t>& idxs) {
      if (idxs.empty()) return 0.0;
      Tape<float> tape;
      tape.recording = false;
      auto logits = classify(tape, feature_batch(idxs), head);
      std::int64_t hit = 0;
      for (std::int64_t i = 0; i < std::int64_t(idxs.size()); ++i)
        hit += detail::argmax_row(logits, i) == corpus.clips[std::size_t(idxs[std::size_t(i)])].label;
      return double(hit) / double(idxs.size());
    };

    SupervisedResult result;
    result.init_test_accuracy = evaluate(split.test);
    for (std::int64_t ep = 0; ep < epochs; ++ep) {
      if (roll && ep > 0) {
        // fresh random starting points each epoch
        Corpus rolled = corpus;
        const std::uint64_t ep_seed = seed_mix({run.seed, stage::kRoll, std::uint64_t(ep)});
        for (std::size_t i = 0; i < rolled.clips.size(); ++i)
          rolled.clips[i].waveform =
              cyclic_roll(rolled.clips[i].waveform, seed_mix({ep_seed, std::uint64_t(i)}));
        feats = extract_features(model, frontend, rolled, all);
      }
      std::vector<std::int64_t> order = split.train;
      Rng rng(seed_mix({run.seed, stage::kBatchOrder, std::uint64_t(ep), 7}));
      rng.shuffle(order);
      for (std::int64_t start = 0; start < std::int64_t(order.size()); start += batch) {
        const std::int64_t end = std::min<std::int64_t>(std::int64_t(order.size()), start + batch);
        std::vector<std::int64_t> chunk(order.begin() + start, order.begin() + end);
        std::vector<std::int64_t> labels(chunk.size());
        for (std::size_t i = 0; i < chunk.size(); ++i)
          labels[i] = corpus.clips[std::size_t(chunk[i])].label;
        Tape<float> tape;
        auto loss = tape.cross_entropy(classify(tape, feature_batch(chunk), head), labels);
        head_reg.zero_grads();
        tape.backward(loss);
        head_opt.step(head_reg, lr);
      }
    }
    result.train_accuracy = evaluate(split.train);
    result.test_accuracy = evaluate(split.test);
    return result;
  }

  // --- fine-tune path ----------------------------------------------------------
  auto build_batch = [&](const std::vector<std::int64_t>& idxs, bool train_aug,
                         std::uint64_t epoch_seed) {
    std::vector<MaskedView> views(idxs.size());
    std::vector<std::int64_t> labels(idxs.size());
    parallel_for(std::int64_t(idxs.size()), 1, [&](std::int64_t i0, std::int64_t i1) {
      for (std::int64_t i = i0; i < i1; ++i) {
        const auto& clip = corpus.clips[std::size_t(idxs[std::size_t(i)])];
        Waveform w = clip.waveform;
        const std::uint64_t item_seed = seed_mix({epoch_seed, std::uint64_t(idxs[std::size_t(i)])});
        if (train_aug && roll) w = cyclic_roll(w, item_seed);
        Spectrogram s = prepare_spectrogram(frontend, mel, w);
        if (train_aug && (specaug_t > 0 || specaug_f > 0))
          s = spec_augment(s, specaug_t, specaug_f, frontend.pad_value(), item_seed);
        MaskSpec none;
        none.mode = MaskMode::kNone;
        views[std::size_t(i)] = mask_view(patchify(s, frontend.patch_t, frontend.patch_f), none, 0);
        labels[std::size_t(i)] = clip.label;
      }
    });
    return std::make_pair(std::move(views), std::move(labels));
  };

  auto evaluate = [&](const std::vector<std::int64_t>& idxs) {
    if (idxs.empty()) return 0.0;
    std::int64_t hit = 0;
    for (std::int64_t start = 0; start < std::int64_t(idxs.size()); start += batch) {
      const std::int64_t end = std::min<std::int64_t>(std::int64_t(idxs.size()), start + batch);
      std::vector<std::int64_t> chunk(idxs.begin() + start, idxs.begin() + end);
      auto [views, labels] = build_batch(chunk, false, 0);
      auto [tokens, pos] = views_to_tensors(views, model.enc_cfg.dim);
      Tape<float> tape;
      tape.recording = false;
      auto logits = classify(tape, pool(tape, encode(tape, tokens, pos, model.enc)), head);
      for (std::int64_t i = 0; i < logits->dim(0); ++i)
        hit += detail::argmax_row(logits, i) == labels[std::size_t(i)];
    }
    return double(hit) / double(idxs.size());
  };

  SupervisedResult result;
  result.init_test_accuracy = evaluate(split.test);
  for (std::int64_t ep = 0; ep < epochs; ++ep) {
    const std::uint64_t epoch_seed = seed_mix({run.seed, stage::kEval, std::uint64_t(ep)});
    std::vector<std::int64_t> order = split.train;
    Rng rng(seed_mix({run.seed, stage::kBatchOrder, std::uint64_t(ep), 7}));
    rng.shuffle(order);
    for (std::int64_t start = 0; start < std::int64_t(order.size()); start += batch) {
      const std::int64_t end = std::min<std::int64_t>(std::int64_t(order.size()), start + batch);
      std::vector<std::int64_t> chunk(order.begin() + start, order.begin() + end);
      auto [views, labels] = build_batch(chunk, true, epoch_seed);
      auto [tokens, pos] = views_to_tensors(views, model.enc_cfg.dim);
      Tape<float> tape;
      auto pooled = pool(tape, encode(tape, tokens, pos, model.enc));
      auto loss = tape.cross_entropy(classify(tape, pooled, head), labels);
      head_reg.zero_grads();
      model.reg.zero_grads();
      tape.backward(loss);
      head_opt.step(head_reg, lr);
      enc_opt.step(model.reg, lr);
    }
  }
  result.train_accuracy = evaluate(split.train);
  result.test_accuracy = evaluate(split.test);
  return result;
}

}  // namespace maskclr
