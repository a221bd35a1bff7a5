// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
    return beamctl::cli::run({argv + 1, argv + argc}, std::cin, std::cout, std::cerr);
}
