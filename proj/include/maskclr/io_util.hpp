// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskclr {

// Shortest stable text form for doubles in metrics/CSV output. Formatting is
// byte-deterministic for a given binary.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// Line-oriented JSONL metrics stream.
class JsonlWriter {
 public:
  JsonlWriter() = default;
  explicit JsonlWriter(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw std::runtime_error("cannot create metrics file: " + path);
    }
  }

  void write(const std::vector<std::pair<std::string, std::string>>& fields) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < fields.size(); ++i)
      os << (i ? "," : "") << "\"" << fields[i].first << "\":" << fields[i].second;
    os << "}\n";
    const std::string line = os.str();
    lines_.push_back(line);
    if (file_.is_open()) {
      file_ << line;
      file_.flush();
    }
  }

  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::ofstream file_;
  std::vector<std::string> lines_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot create csv: " + path);
    for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
    f << "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
      f << "\n";
    }
    if (!f) throw std::runtime_error("short write: " + path);
  }

  static CsvTable read(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open csv: " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (first) {
        t.header = cells;
        first = false;
      } else {
        t.rows.push_back(cells);
      }
    }
    return t;
  }
};

}  // namespace maskclr
