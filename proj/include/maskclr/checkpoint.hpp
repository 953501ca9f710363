// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint format: a text manifest (array table, config snapshot, RNG
// state, step counter) next to a raw little-endian float32 blob. Writing is
// fully deterministic so identical state produces identical bytes.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskclr/model.hpp"
#include "maskclr/optimizer.hpp"

namespace maskclr {

struct CheckpointArray {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct CheckpointData {
  std::int64_t step = 0;
  std::uint64_t rng_state = 0;
  std::vector<std::string> config_lines;
  std::vector<CheckpointArray> arrays;

  const CheckpointArray* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }
};

inline std::string manifest_path(const std::string& stem) { return stem + ".manifest"; }
inline std::string blob_path(const std::string& stem) { return stem + ".blob"; }

inline void save_checkpoint(const std::string& stem, const CheckpointData& d) {
  std::ofstream blob(blob_path(stem), std::ios::binary);
  if (!blob) throw std::runtime_error("cannot create " + blob_path(stem));
  std::ostringstream manifest;
  manifest << "maskclr-checkpoint 1\n";
  manifest << "step " << d.step << "\n";
  manifest << "rng " << d.rng_state << "\n";
  manifest << "config_begin\n";
  for (const auto& line : d.config_lines) manifest << line << "\n";
  manifest << "config_end\n";
  std::uint64_t offset = 0;
  for (const auto& a : d.arrays) {
    if (std::int64_t(a.data.size()) != shape_numel(a.shape))
      throw std::runtime_error("checkpoint: array/shape mismatch for " + a.name);
    const std::uint64_t nbytes = a.data.size() * sizeof(float);
    manifest << "array " << a.name << " " << a.shape.size();
    for (auto dim : a.shape) manifest << " " << dim;
    manifest << " " << offset << " " << nbytes << "\n";
    blob.write(reinterpret_cast<const char*>(a.data.data()), std::streamsize(nbytes));
    offset += nbytes;
  }
  manifest << "end\n";
  if (!blob) throw std::runtime_error("short write: " + blob_path(stem));
  blob.close();

  std::ofstream mf(manifest_path(stem), std::ios::binary);
  if (!mf) throw std::runtime_error("cannot create " + manifest_path(stem));
  mf << manifest.str();
  if (!mf) throw std::runtime_error("short write: " + manifest_path(stem));
}

inline CheckpointData load_checkpoint(const std::string& stem) {
  std::ifstream mf(manifest_path(stem));
  if (!mf) throw std::runtime_error("cannot open " + manifest_path(stem));
  std::ifstream blob(blob_path(stem), std::ios::binary);
  if (!blob) throw std::runtime_error("cannot open " + blob_path(stem));

  CheckpointData d;
  std::string line;
  if (!std::getline(mf, line) || line != "maskclr-checkpoint 1")
    throw std::runtime_error("bad checkpoint manifest header: " + stem);
  bool in_config = false;
  std::uint64_t expected_offset = 0;
  while (std::getline(mf, line)) {
    if (in_config) {
      if (line == "config_end") {
        in_config = false;
      } else {
        d.config_lines.push_back(line);
      }
      continue;
    }
    if (line == "config_begin") {
      in_config = true;
      continue;
    }
    if (line == "end") break;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "step") {
      ls >> d.step;
    } else if (kind == "rng") {
      ls >> d.rng_state;
    } else if (kind == "array") {
      CheckpointArray a;
      std::size_t ndim = 0;
      ls >> a.name >> ndim;
      a.shape.resize(ndim);
      for (auto& dim : a.shape) ls >> dim;
      std::uint64_t offset = 0, nbytes = 0;
      ls >> offset >> nbytes;
      if (!ls) throw std::runtime_error("bad array line in manifest: " + line);
      if (offset != expected_offset)
        throw std::runtime_error("manifest offsets do not partition the blob at " + a.name);
      a.data.resize(nbytes / sizeof(float));
      blob.read(reinterpret_cast<char*>(a.data.data()), std::streamsize(nbytes));
      if (!blob) throw std::runtime_error("blob truncated at " + a.name);
      expected_offset = offset + nbytes;
      d.arrays.push_back(std::move(a));
    } else {
      throw std::runtime_error("unknown manifest line: " + line);
    }
  }
  // trailing bytes would mean the offsets do not partition the blob
  blob.peek();
  if (!blob.eof()) throw std::runtime_error("blob larger than manifest describes: " + stem);
  return d;
}

// --- registry/optimizer bridging ---------------------------------------------

template <typename T>
void collect_registry(const ParamRegistry<T>& reg, CheckpointData& d) {
  for (const auto& e : reg.entries()) {
    CheckpointArray a;
    a.name = e.name;
    a.shape = e.tensor->shape;
    a.data.resize(e.tensor->value.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = float(e.tensor->value[i]);
    d.arrays.push_back(std::move(a));
  }
}

template <typename T>
void collect_optimizer(const AdamW<T>& opt, CheckpointData& d) {
  for (const auto& [name, mom] : opt.state()) {
    CheckpointArray m, v;
    m.name = "optim.m." + name;
    v.name = "optim.v." + name;
    m.shape = {std::int64_t(mom.m.size())};
    v.shape = {std::int64_t(mom.v.size())};
    m.data.assign(mom.m.begin(), mom.m.end());
    v.data.assign(mom.v.begin(), mom.v.end());
    d.arrays.push_back(std::move(m));
    d.arrays.push_back(std::move(v));
  }
}

template <typename T>
void apply_to_registry(const CheckpointData& d, ParamRegistry<T>& reg) {
  for (const auto& e : reg.entries()) {
    const CheckpointArray* a = d.find(e.name);
    if (!a) throw std::runtime_error("checkpoint missing array " + e.name);
    if (a->shape != e.tensor->shape)
      throw std::runtime_error("checkpoint shape mismatch for " + e.name + ": " +
                               shape_str(a->shape) + " vs " + shape_str(e.tensor->shape));
    for (std::size_t i = 0; i < a->data.size(); ++i) e.tensor->value[i] = T(a->data[i]);
  }
}

}  // namespace maskclr
