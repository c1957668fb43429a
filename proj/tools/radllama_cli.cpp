// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "radllama/cli.hpp"

int main(int argc, char** argv) {
  return radllama::cli_dispatch(argc, argv, std::cout, std::cerr);
}
