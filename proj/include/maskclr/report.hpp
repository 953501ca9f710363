// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Aggregates the line-oriented outputs of a run directory (metrics.jsonl,
// probe_results.csv, erank.csv, ablation.csv) into readable tables and a
// summary.csv.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "maskclr/io_util.hpp"

namespace maskclr {
namespace cli {

inline void print_csv(const CsvTable& t, std::ostream& os) {
  std::vector<std::size_t> width(t.header.size(), 0);
  auto measure = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i)
      width[i] = std::max(width[i], row[i].size());
  };
  measure(t.header);
  for (const auto& r : t.rows) measure(r);
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) {
      os << row[i];
      for (std::size_t p = row[i].size(); p < width[i] + 2; ++p) os << ' ';
    }
    os << "\n";
  };
  emit(t.header);
  for (const auto& r : t.rows) emit(r);
}

inline int cmd_report(const std::string& dir) {
  namespace fs = std::filesystem;
  CsvTable summary;
  summary.header = {"metric", "value"};
  bool found_any = false;

  const fs::path metrics_path = fs::path(dir) / "metrics.jsonl";
  if (fs::exists(metrics_path)) {
    found_any = true;
    std::ifstream f(metrics_path);
    std::string line;
    double first_loss = 0.0, window_sum = 0.0;
    std::vector<double> losses;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      losses.push_back(j.at("loss").get<double>());
    }
    if (!losses.empty()) {
      first_loss = losses.front();
      const std::size_t w = std::min<std::size_t>(100, losses.size());
      for (std::size_t i = losses.size() - w; i < losses.size(); ++i) window_sum += losses[i];
      const double window_mean = window_sum / double(w);
      std::cout << "== pretraining (" << losses.size() << " steps)\n";
      std::cout << "step-0 loss            " << fmt_double(first_loss) << "\n";
      std::cout << "trailing-100 mean loss " << fmt_double(window_mean) << "\n\n";
      summary.rows.push_back({"steps", std::to_string(losses.size())});
      summary.rows.push_back({"step0_loss", fmt_double(first_loss)});
      summary.rows.push_back({"final_window_loss", fmt_double(window_mean)});
    }
  }

  for (const char* name : {"probe_results.csv", "erank.csv", "ablation.csv"}) {
    const fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) continue;
    found_any = true;
    CsvTable t = CsvTable::read(p.string());
    // Per-sigma columns are informative in the file but noise in a terminal
    // table; keep the first four columns for erank.
    if (std::string(name) == "erank.csv" && t.header.size() > 4) {
      CsvTable cut;
      cut.header.assign(t.header.begin(), t.header.begin() + 4);
      for (const auto& r : t.rows)
        cut.rows.push_back(std::vector<std::string>(r.begin(), r.begin() + 4));
      t = cut;
    }
    std::cout << "== " << name << "\n";
    print_csv(t, std::cout);
    std::cout << "\n";
    for (const auto& r : t.rows) {
      if (std::string(name) == "probe_results.csv" && r.size() >= 3)
        summary.rows.push_back({"probe_" + r[0] + (r[1] != "-1" ? "_layer" + r[1] : ""), r[2]});
      if (std::string(name) == "erank.csv" && r.size() >= 4)
        summary.rows.push_back({"erank_" + r[0], r[3]});
    }
  }

  if (!found_any) {
    std::cerr << "report: nothing to aggregate in " << dir << "\n";
    return 1;
  }
  summary.write((fs::path(dir) / "summary.csv").string());
  std::cout << "summary written to " << (fs::path(dir) / "summary.csv").string() << "\n";
  return 0;
}

}  // namespace cli
}  // namespace maskclr
