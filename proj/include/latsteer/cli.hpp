// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace latsteer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitComputeError = 1;
inline constexpr int kExitInputError = 2;

// Runs one subcommand; args excludes the program name. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace latsteer::cli
