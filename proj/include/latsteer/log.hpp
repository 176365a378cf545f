// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fmt/core.h>

#include <string_view>

namespace latsteer::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

// Threshold read once from LATSTEER_LOG (error|warn|info|debug); default warn.
Level threshold();
void set_threshold(Level level);
void emit(Level level, std::string_view message);

template <typename... Args>
void error(fmt::format_string<Args...> f, Args&&... args) {
  if (threshold() >= Level::error) emit(Level::error, fmt::format(f, std::forward<Args>(args)...));
}
template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  if (threshold() >= Level::warn) emit(Level::warn, fmt::format(f, std::forward<Args>(args)...));
}
template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  if (threshold() >= Level::info) emit(Level::info, fmt::format(f, std::forward<Args>(args)...));
}
template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  if (threshold() >= Level::debug) emit(Level::debug, fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace latsteer::log
