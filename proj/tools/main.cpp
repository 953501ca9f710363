// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include "maskclr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return maskclr::cli::run(std::move(args));
}
