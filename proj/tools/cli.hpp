// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace beamctl::cli {

enum ExitCode : int { kOk = 0, kRuntime = 1, kParse = 2, kAborted = 3 };

/// Entry point of `beamctl`; args exclude the program name.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

/// Fixed-width horizontal bar chart of a 1-D spectrum, `rows` lines.
std::string render_ascii(const std::vector<std::uint64_t>& spectrum, std::size_t rows = 32, std::size_t width = 60);

}  // namespace beamctl::cli
