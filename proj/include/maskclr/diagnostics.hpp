// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Effective-rank comparison harness over inference-time masking modes.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskclr/effective_rank.hpp"
#include "maskclr/io_util.hpp"
#include "maskclr/pipeline.hpp"

namespace maskclr {

struct ErankRow {
  MaskMode mode = MaskMode::kNone;
  std::int64_t batch = 0;
  int dim = 0;
  SingularSpectrum spectrum;
};

// For each mode, pooled last-layer representations are extracted under that
// inference-time masking (fresh seeds per mode) and reduced to a singular
// spectrum and effective rank.
inline std::vector<ErankRow> erank_report(ModelBundle& model, const Frontend& frontend,
                                          const Corpus& corpus, const std::vector<MaskMode>& modes,
                                          std::int64_t batch, std::uint64_t seed,
                                          bool center = false) {
  if (corpus.size() < 64) throw std::runtime_error("erank_report: corpus too small (need >= 64 clips)");
  const std::int64_t n = std::min<std::int64_t>(batch, corpus.size());

  Rng rng(seed_mix({seed, stage::kEval, 99}));
  std::vector<std::int64_t> sample = rng.permutation(corpus.size());
  sample.resize(std::size_t(n));

  std::vector<ErankRow> rows;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const std::uint64_t mode_seed = seed_mix({seed, stage::kEval, 100 + std::uint64_t(m)});
    FeatureSet f = extract_features(model, frontend, corpus, sample, modes[m], mode_seed);
    std::vector<double> z(f.layers.back().begin(), f.layers.back().end());
    if (center) z = center_rows(std::move(z), n, f.dim);
    ErankRow row;
    row.mode = modes[m];
    row.batch = n;
    row.dim = f.dim;
    row.spectrum = singular_values(z, n, f.dim);
    rows.push_back(std::move(row));
  }
  return rows;
}

// CSV layout: mode, B, d, erank, sigma_1..sigma_Q.
inline CsvTable erank_rows_to_csv(const std::vector<ErankRow>& rows) {
  CsvTable t;
  t.header = {"mode", "B", "d", "erank"};
  if (!rows.empty())
    for (std::size_t i = 0; i < rows[0].spectrum.sigma.size(); ++i)
      t.header.push_back("sigma_" + std::to_string(i + 1));
  for (const auto& r : rows) {
    std::vector<std::string> cells = {to_string(r.mode), std::to_string(r.batch),
                                      std::to_string(r.dim), fmt_double(r.spectrum.erank)};
    for (double s : r.spectrum.sigma) cells.push_back(fmt_double(s));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace maskclr
