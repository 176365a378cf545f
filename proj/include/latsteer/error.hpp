// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace latsteer {

// Bad or inconsistent input: missing files, malformed formats, violated
// preconditions. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation could not produce a result from otherwise valid input
// (rank-deficient data, a failing objective). The CLI maps this to exit code 1.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace latsteer
