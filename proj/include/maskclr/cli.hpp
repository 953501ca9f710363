// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry points. Exit codes: 0 success, 1 validation/usage
// error, 2 runtime failure.

#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "maskclr/checkpoint.hpp"
#include "maskclr/config.hpp"
#include "maskclr/corpus.hpp"
#include "maskclr/diagnostics.hpp"
#include "maskclr/gradcheck.hpp"
#include "maskclr/io_util.hpp"
#include "maskclr/pipeline.hpp"
#include "maskclr/probe.hpp"
#include "maskclr/report.hpp"
#include "maskclr/trainer.hpp"

namespace maskclr {
namespace cli {

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::int64_t> seed;
  std::optional<bool> deterministic;

  Config build() const {
    Config cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& o : overrides) cfg.apply_override(o);
    if (seed) cfg.set("run.seed", std::to_string(*seed));
    if (deterministic) cfg.set("run.deterministic", *deterministic ? "true" : "false");
    return cfg;
  }
};

inline void attach_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_file, "key = value config file");
  cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
  auto* seed_opt = cmd->add_option("--seed", "master seed (overrides run.seed)");
  seed_opt->each([&args](const std::string& v) { args.seed = std::stoll(v); });
  auto* det = cmd->add_flag("--deterministic,!--no-deterministic", "deterministic metrics stream");
  det->each([&args, det](const std::string&) { args.deterministic = det->as<bool>(); });
}

inline Corpus build_corpus(const Config& cfg) {
  if (cfg.get_string("corpus.kind") == "dir")
    return ingest_corpus(cfg.get_string("corpus.dir"), cfg.get_string("corpus.manifest"));
  SynthSpec spec;
  spec.clips_per_class = cfg.get_int("corpus.clips_per_class");
  spec.duration_s = cfg.get_float("corpus.duration_s");
  return generate_corpus(spec, std::uint64_t(cfg.get_int("run.seed")));
}

// Recomputes normalization constants from the corpus when requested.
inline void apply_auto_stats(Config& cfg, const Corpus& corpus) {
  if (!cfg.get_bool("mel.auto_stats")) return;
  Frontend f = frontend_from_config(cfg);
  auto [mean, stddev] = corpus_mel_stats(corpus, f.mel);
  cfg.set("mel.mean", fmt_double(mean));
  cfg.set("mel.std", fmt_double(stddev));
}

// Rebuilds config + corpus + model from a checkpoint's manifest snapshot.
struct LoadedRun {
  Config cfg;
  Corpus corpus;
  std::unique_ptr<ModelBundle> model;
  Frontend frontend;
};

inline LoadedRun load_run(const std::string& stem, const std::vector<std::string>& overrides) {
  CheckpointData d = load_checkpoint(stem);
  LoadedRun run;
  run.cfg.load_snapshot_lines(d.config_lines);
  for (const auto& o : overrides) run.cfg.apply_override(o);
  run.corpus = build_corpus(run.cfg);
  run.frontend = frontend_from_config(run.cfg);
  run.model = ModelBundle::create(encoder_from_config(run.cfg), projection_from_config(run.cfg),
                                  std::uint64_t(run.cfg.get_int("run.seed")));
  apply_to_registry(d, run.model->reg);
  return run;
}

inline int cmd_synth(const CommonArgs& common, const std::string& out_dir) {
  Config cfg = common.build();
  Corpus corpus = build_corpus(cfg);
  export_corpus(corpus, out_dir);
  Frontend f = frontend_from_config(cfg);
  auto [mean, stddev] = corpus_mel_stats(corpus, f.mel);
  std::cout << "corpus: " << corpus.size() << " clips, " << corpus.n_classes() << " classes -> "
            << out_dir << "\n";
  std::cout << "log-mel stats: mean " << fmt_double(mean) << " std " << fmt_double(stddev) << "\n";
  return 0;
}

inline int cmd_pretrain(const CommonArgs& common) {
  Config cfg = common.build();
  Corpus corpus = build_corpus(cfg);
  apply_auto_stats(cfg, corpus);
  auto model = ModelBundle::create(encoder_from_config(cfg), projection_from_config(cfg),
                                   std::uint64_t(cfg.get_int("run.seed")));
  const std::string out_dir = cfg.get_string("run.out_dir");
  std::filesystem::create_directories(out_dir);
  JsonlWriter metrics((std::filesystem::path(out_dir) / "metrics.jsonl").string());
  PretrainResult r = pretrain(cfg, corpus, *model, metrics);
  std::cout << "pretrain done: " << r.losses.size() << " steps, step0 loss "
            << fmt_double(r.step0_loss) << ", final-window mean " << fmt_double(r.final_window_mean)
            << "\ncheckpoint: " << r.checkpoint_stem << "\n";
  return 0;
}

inline int cmd_probe(const CommonArgs& common, const std::string& checkpoint, const std::string& kind,
                     int layer) {
  LoadedRun run = load_run(checkpoint, common.overrides);
  if (common.seed) run.cfg.set("run.seed", std::to_string(*common.seed));
  apply_thread_setting(int(run.cfg.get_int("run.threads")));

  const std::uint64_t seed = std::uint64_t(run.cfg.get_int("run.seed"));
  const Split split = split_corpus(run.corpus.size(), run.cfg.get_float("corpus.train_fraction"), seed);
  std::vector<std::int64_t> all(static_cast<std::size_t>(run.corpus.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = std::int64_t(i);
  FeatureSet feats = extract_features(*run.model, run.frontend, run.corpus, all);

  ProbeConfig pc;
  pc.kind = probe_kind_from_string(kind);
  pc.layer = layer >= 0 ? layer : int(run.cfg.get_int("probe.layer"));
  pc.epochs = run.cfg.get_int("sup.epochs");
  pc.lr = run.cfg.get_float("sup.lr");
  pc.batch = run.cfg.get_int("sup.batch");
  pc.seed = seed;
  pc.attn_dim = int(run.cfg.get_int("probe.dim"));
  ProbeResult r = train_probe(feats, split.train, split.test, run.corpus.n_classes(), pc);

  const std::string out_dir = run.cfg.get_string("run.out_dir");
  std::filesystem::create_directories(out_dir);
  const std::string csv_path = (std::filesystem::path(out_dir) / "probe_results.csv").string();
  CsvTable t;
  if (std::filesystem::exists(csv_path)) t = CsvTable::read(csv_path);
  if (t.header.empty()) t.header = {"kind", "layer", "test_accuracy", "train_accuracy"};
  t.rows.push_back({kind, std::to_string(pc.kind == ProbeKind::kLinearLayer ? pc.layer : -1),
                    fmt_double(r.test_accuracy), fmt_double(r.train_accuracy)});
  t.write(csv_path);
  std::cout << "probe " << kind << ": test accuracy " << fmt_double(r.test_accuracy) << "\n";
  return 0;
}

inline int cmd_finetune(const CommonArgs& common, const std::string& checkpoint) {
  LoadedRun run = load_run(checkpoint, common.overrides);
  SupervisedResult r = train_supervised(SupervisedMode::kFinetune, run.cfg, run.corpus, *run.model);
  std::cout << "finetune: test accuracy " << fmt_double(r.test_accuracy) << ", train accuracy "
            << fmt_double(r.train_accuracy) << "\n";
  return 0;
}

inline int cmd_erank(const CommonArgs& common, const std::string& checkpoint,
                     const std::string& modes_csv) {
  LoadedRun run = load_run(checkpoint, common.overrides);
  std::vector<MaskMode> modes;
  std::stringstream ss(modes_csv);
  std::string item;
  while (std::getline(ss, item, ',')) modes.push_back(mask_mode_from_string(item));
  if (modes.empty()) throw ConfigError("erank: no modes given");

  auto rows = erank_report(*run.model, run.frontend, run.corpus, modes,
                           run.cfg.get_int("erank.batch"),
                           std::uint64_t(run.cfg.get_int("run.seed")),
                           run.cfg.get_bool("erank.center"));
  CsvTable t = erank_rows_to_csv(rows);
  const std::string out_dir = run.cfg.get_string("run.out_dir");
  std::filesystem::create_directories(out_dir);
  t.write((std::filesystem::path(out_dir) / "erank.csv").string());
  for (const auto& r : rows)
    std::cout << "erank[" << to_string(r.mode) << "] B=" << r.batch << " d=" << r.dim << " -> "
              << fmt_double(r.spectrum.erank) << "\n";
  return 0;
}

inline int cmd_spectrogram(const CommonArgs& common, const std::string& wav_path,
                           const std::string& out_path) {
  Config cfg = common.build();
  Frontend f = frontend_from_config(cfg);
  Waveform w = resample_linear(read_wav(wav_path), f.sample_rate);
  Spectrogram s = log_mel(w, f.mel);
  const std::string out = out_path.empty() ? wav_path + ".spec" : out_path;
  write_spectrogram(out, s);
  double lo = s.values[0], hi = s.values[0], mean = 0.0;
  for (float v : s.values) {
    lo = std::min(lo, double(v));
    hi = std::max(hi, double(v));
    mean += v;
  }
  mean /= double(s.values.size());
  std::cout << "spectrogram: " << s.frames << " x " << s.bins << " -> " << out << "\n"
            << "min " << fmt_double(lo) << " max " << fmt_double(hi) << " mean " << fmt_double(mean)
            << "\n";
  return 0;
}

inline int cmd_augment(const CommonArgs& common, const std::string& wav_path,
                       const std::string& out_path) {
  Config cfg = common.build();
  Frontend f = frontend_from_config(cfg);
  Waveform w = resample_linear(read_wav(wav_path), f.sample_rate);
  Waveform out = augment_waveform(w, f.aug, std::uint64_t(cfg.get_int("run.seed")));
  const std::string path = out_path.empty() ? wav_path + ".aug.wav" : out_path;
  write_wav(path, out);
  std::cout << "augmented " << wav_path << " -> " << path << " (" << out.size() << " samples)\n";
  return 0;
}

inline int cmd_gradcheck(const CommonArgs& common) {
  Config cfg = common.build();
  auto entries = run_gradcheck_suite(std::uint64_t(cfg.get_int("run.seed")));
  double worst = 0.0;
  for (const auto& e : entries) {
    std::cout << "gradcheck " << e.name;
    for (std::size_t i = e.name.size(); i < 28; ++i) std::cout << ' ';
    std::cout << "max rel err " << fmt_double(e.max_rel_error) << "\n";
    worst = std::max(worst, e.max_rel_error);
  }
  std::cout << "worst: " << fmt_double(worst) << "\n";
  if (worst >= 1e-4) throw std::runtime_error("gradient check failed (>= 1e-4)");
  return 0;
}

inline int run(std::vector<std::string> args) {
  CLI::App app{"contrastive audio pre-training with structured time-frequency masking"};
  app.require_subcommand(1);
  app.footer(config_help());

  CommonArgs synth_args, pre_args, probe_args, ft_args, erank_args, spec_args, aug_args, gc_args,
      report_args;

  std::string synth_out = "corpus";
  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus as WAV + manifest");
  attach_common(synth, synth_args);
  synth->add_option("--out", synth_out, "output directory");

  auto* pre = app.add_subcommand("pretrain", "contrastive pre-training");
  attach_common(pre, pre_args);

  std::string probe_ckpt, probe_kind = "last";
  int probe_layer = -1;
  auto* probe = app.add_subcommand("probe", "train a probe on a frozen encoder");
  attach_common(probe, probe_args);
  probe->add_option("--checkpoint", probe_ckpt, "checkpoint stem")->required();
  probe->add_option("--kind", probe_kind, "last|layer|weighted|attentive");
  probe->add_option("--layer", probe_layer, "layer index for --kind layer");

  std::string ft_ckpt;
  auto* ft = app.add_subcommand("finetune", "fine-tune the full encoder with a linear head");
  attach_common(ft, ft_args);
  ft->add_option("--checkpoint", ft_ckpt, "checkpoint stem")->required();

  std::string erank_ckpt, erank_modes = "none,unstructured,time_freq";
  auto* erank = app.add_subcommand("erank", "effective-rank report over inference-time masking");
  attach_common(erank, erank_args);
  erank->add_option("--checkpoint", erank_ckpt, "checkpoint stem")->required();
  erank->add_option("--modes", erank_modes, "comma-separated masking modes");

  std::string spec_wav, spec_out;
  auto* spec = app.add_subcommand("spectrogram", "dump a log-mel spectrogram (binary) and stats");
  attach_common(spec, spec_args);
  spec->add_option("wav", spec_wav, "input WAV file")->required();
  spec->add_option("--out", spec_out, "output .spec path");

  std::string aug_wav, aug_out;
  auto* aug = app.add_subcommand("augment", "apply the waveform augmentation chain");
  attach_common(aug, aug_args);
  aug->add_option("wav", aug_wav, "input WAV file")->required();
  aug->add_option("--out", aug_out, "output WAV path");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  attach_common(gc, gc_args);

  std::string report_dir = ".";
  auto* rep = app.add_subcommand("report", "aggregate run metrics into summary tables");
  attach_common(rep, report_args);
  rep->add_option("--dir", report_dir, "run directory");

  std::vector<const char*> argv;
  argv.push_back("maskclr");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args, synth_out);
    if (pre->parsed()) return cmd_pretrain(pre_args);
    if (probe->parsed()) return cmd_probe(probe_args, probe_ckpt, probe_kind, probe_layer);
    if (ft->parsed()) return cmd_finetune(ft_args, ft_ckpt);
    if (erank->parsed()) return cmd_erank(erank_args, erank_ckpt, erank_modes);
    if (spec->parsed()) return cmd_spectrogram(spec_args, spec_wav, spec_out);
    if (aug->parsed()) return cmd_augment(aug_args, aug_wav, aug_out);
    if (gc->parsed()) return cmd_gradcheck(gc_args);
    if (rep->parsed()) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace cli
}  // namespace maskclr
