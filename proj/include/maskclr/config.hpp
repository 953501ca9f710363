// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Line-based "key = value" run configuration. Every key is declared in one
// table with a default, a type and a one-line description; unknown keys are
// rejected and --help output is generated from the same table.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskclr {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class KeyType { kInt, kFloat, kBool, kString };

struct ConfigKey {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string description;
};

inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      // mel frontend
      {"mel.n_mels", KeyType::kInt, "128", "mel filterbank size"},
      {"mel.win_ms", KeyType::kFloat, "25", "analysis window length in ms"},
      {"mel.hop_ms", KeyType::kFloat, "10", "hop size in ms"},
      {"mel.fmin", KeyType::kFloat, "20", "filterbank lower edge in Hz"},
      {"mel.fmax", KeyType::kFloat, "0", "filterbank upper edge in Hz (0 = Nyquist)"},
      {"mel.log_floor", KeyType::kFloat, "1e-10", "power floor applied before the log"},
      {"mel.target_frames", KeyType::kInt, "96", "frame count after pad/trim"},
      {"mel.mean", KeyType::kFloat, "-4.268", "normalization mean"},
      {"mel.std", KeyType::kFloat, "4.569", "normalization stddev"},
      {"mel.auto_stats", KeyType::kBool, "true", "recompute mean/std from the corpus"},
      // masking
      {"mask.rho_t", KeyType::kFloat, "0.6", "time mask ratio"},
      {"mask.rho_f", KeyType::kFloat, "0.4", "frequency mask ratio"},
      {"mask.rho_u", KeyType::kFloat, "0.5", "unstructured mask ratio"},
      {"mask.mode", KeyType::kString, "time_freq", "none|time|freq|time_freq|unstructured"},
      {"mask.max_segment", KeyType::kInt, "0", "largest contiguous masked run (0 = ceil(k/2))"},
      // model
      {"model.depth", KeyType::kInt, "4", "encoder layers"},
      {"model.dim", KeyType::kInt, "96", "encoder width"},
      {"model.heads", KeyType::kInt, "4", "attention heads"},
      {"model.mlp_ratio", KeyType::kInt, "4", "feed-forward expansion"},
      {"model.patch_t", KeyType::kInt, "16", "patch frames"},
      {"model.patch_f", KeyType::kInt, "16", "patch mel bins"},
      {"model.proj_hidden", KeyType::kInt, "512", "projection head hidden width"},
      {"model.proj_out", KeyType::kInt, "128", "projection head output width"},
      // optimization
      {"optim.lr", KeyType::kFloat, "6e-4", "base learning rate"},
      {"optim.weight_decay", KeyType::kFloat, "0.01", "decoupled weight decay"},
      {"optim.beta1", KeyType::kFloat, "0.9", "Adam beta1"},
      {"optim.beta2", KeyType::kFloat, "0.999", "Adam beta2"},
      {"optim.eps", KeyType::kFloat, "1e-8", "Adam epsilon"},
      {"optim.schedule", KeyType::kString, "fixed", "fixed|warmup_cosine"},
      {"optim.warmup_epochs", KeyType::kFloat, "1", "warmup length in epochs"},
      {"optim.min_lr", KeyType::kFloat, "1e-6", "cosine floor"},
      {"loss.tau", KeyType::kFloat, "0.1", "InfoNCE temperature"},
      // run control
      {"run.steps", KeyType::kInt, "2000", "pre-training steps"},
      {"run.batch", KeyType::kInt, "64", "clips per step (views = 2x)"},
      {"run.seed", KeyType::kInt, "1", "master seed"},
      {"run.deterministic", KeyType::kBool, "true", "zero wall-time field; bitwise-reproducible stream"},
      {"run.threads", KeyType::kInt, "0", "worker threads (0 = hardware)"},
      {"run.checkpoint_every", KeyType::kInt, "500", "checkpoint interval in steps"},
      {"run.out_dir", KeyType::kString, "runs/default", "output directory"},
      // corpus
      {"corpus.kind", KeyType::kString, "synth", "synth|dir"},
      {"corpus.dir", KeyType::kString, "", "WAV directory (corpus.kind=dir)"},
      {"corpus.manifest", KeyType::kString, "", "manifest CSV (corpus.kind=dir)"},
      {"corpus.clips_per_class", KeyType::kInt, "100", "synthetic clips per class"},
      {"corpus.duration_s", KeyType::kFloat, "1.0", "synthetic clip length"},
      {"corpus.train_fraction", KeyType::kFloat, "0.8", "train/test split"},
      // waveform augmentation (chain order is fixed)
      {"augment.enabled", KeyType::kBool, "true", "apply the waveform augmentation chain"},
      {"augment.polarity_p", KeyType::kFloat, "0.5", "polarity inversion probability"},
      {"augment.stretch_p", KeyType::kFloat, "0.7", "time stretch probability"},
      {"augment.stretch_min", KeyType::kFloat, "0.7", "minimum stretch rate"},
      {"augment.stretch_max", KeyType::kFloat, "1.25", "maximum stretch rate"},
      {"augment.noise_p", KeyType::kFloat, "0.5", "SNR noise probability"},
      {"augment.noise_snr_min", KeyType::kFloat, "5", "minimum SNR in dB"},
      {"augment.noise_snr_max", KeyType::kFloat, "40", "maximum SNR in dB"},
      {"augment.gain_p", KeyType::kFloat, "0.3", "gain probability"},
      {"augment.gain_min", KeyType::kFloat, "-12", "minimum gain in dB"},
      {"augment.gain_max", KeyType::kFloat, "12", "maximum gain in dB"},
      {"augment.highpass_p", KeyType::kFloat, "0.3", "high-pass probability"},
      {"augment.highpass_min", KeyType::kFloat, "20", "minimum cutoff in Hz"},
      {"augment.highpass_max", KeyType::kFloat, "2400", "maximum cutoff in Hz"},
      {"augment.bandstop_p", KeyType::kFloat, "0.5", "band-stop probability"},
      {"augment.bandstop_min", KeyType::kFloat, "200", "minimum center in Hz"},
      {"augment.bandstop_max", KeyType::kFloat, "4000", "maximum center in Hz"},
      {"augment.pitch_p", KeyType::kFloat, "0.6", "pitch shift probability"},
      {"augment.pitch_min", KeyType::kFloat, "-4", "minimum shift in semitones"},
      {"augment.pitch_max", KeyType::kFloat, "4", "maximum shift in semitones"},
      // supervised training (probe / finetune)
      {"sup.epochs", KeyType::kInt, "40", "supervised epochs"},
      {"sup.lr", KeyType::kFloat, "1e-3", "supervised learning rate"},
      {"sup.batch", KeyType::kInt, "32", "supervised batch size"},
      {"sup.roll", KeyType::kBool, "false", "cyclic time roll augmentation"},
      {"sup.specaug_t", KeyType::kInt, "0", "SpecAugment max time width (finetune)"},
      {"sup.specaug_f", KeyType::kInt, "0", "SpecAugment max freq width (finetune)"},
      // probes
      {"probe.kind", KeyType::kString, "last", "last|layer|weighted|attentive"},
      {"probe.layer", KeyType::kInt, "-1", "layer index for probe.kind=layer"},
      {"probe.dim", KeyType::kInt, "64", "attentive probe key width"},
      // effective-rank report
      {"erank.batch", KeyType::kInt, "256", "embeddings per report row"},
      {"erank.center", KeyType::kBool, "false", "mean-center before the SVD"},
  };
  return schema;
}

class Config {
 public:
  Config() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
  }

  static const ConfigKey& schema_for(const std::string& key) {
    for (const auto& k : config_schema())
      if (k.name == key) return k;
    throw ConfigError("unknown config key: " + key);
  }

  void set(const std::string& key, const std::string& value) {
    const ConfigKey& schema = schema_for(key);
    validate_value(schema, value);
    values_[key] = value;
  }

  // "key = value" lines; '#' starts a comment, blank lines are skipped.
  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
      set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
    }
  }

  // "key=value" command line override.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  const std::string& get_string(const std::string& key) const { return raw(key); }

  std::int64_t get_int(const std::string& key) const {
    return parse_int(raw(key), key);
  }

  double get_float(const std::string& key) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(raw(key), &used);
      if (used != raw(key).size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not a number: " + raw(key));
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key " + key + " is not a bool: " + v);
  }

  // Deterministic snapshot, schema order.
  std::vector<std::string> snapshot_lines() const {
    std::vector<std::string> out;
    for (const auto& k : config_schema()) out.push_back(k.name + " = " + values_.at(k.name));
    return out;
  }

  void load_snapshot_lines(const std::vector<std::string>& lines) {
    for (const auto& line : lines) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("bad snapshot line: " + line);
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::int64_t parse_int(const std::string& v, const std::string& key) {
    try {
      std::size_t used = 0;
      const std::int64_t r = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument("");
      return r;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not an integer: " + v);
    }
  }

  static void validate_value(const ConfigKey& schema, const std::string& value) {
    switch (schema.type) {
      case KeyType::kInt:
        parse_int(value, schema.name);
        break;
      case KeyType::kFloat: {
        try {
          std::size_t used = 0;
          std::stod(value, &used);
          if (used != value.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
          throw ConfigError("config key " + schema.name + " is not a number: " + value);
        }
        break;
      }
      case KeyType::kBool:
        if (value != "true" && value != "false" && value != "0" && value != "1")
          throw ConfigError("config key " + schema.name + " is not a bool: " + value);
        break;
      case KeyType::kString:
        break;
    }
  }

  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  std::map<std::string, std::string> values_;
};

// One line per key for --help output.
inline std::string config_help() {
  std::ostringstream os;
  os << "config keys (key = value; defaults shown):\n";
  for (const auto& k : config_schema()) {
    os << "  " << k.name;
    for (std::size_t i = k.name.size(); i < 26; ++i) os << ' ';
    os << "= " << k.default_value;
    for (std::size_t i = k.default_value.size(); i < 12; ++i) os << ' ';
    os << "# " << k.description << "\n";
  }
  return os.str();
}

}  // namespace maskclr
