// Copyright 2026 The latsteer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latsteer/log.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>

namespace latsteer::log {
namespace {

Level parse_env() {
  const char* raw = std::getenv("LATSTEER_LOG");
  if (raw == nullptr) return Level::warn;
  const std::string value(raw);
  if (value == "error") return Level::error;
  if (value == "info") return Level::info;
  if (value == "debug") return Level::debug;
  return Level::warn;
}

std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(parse_env())};
  return level;
}

const char* tag(Level level) {
  switch (level) {
    case Level::error: return "error";
    case Level::warn: return "warn";
    case Level::info: return "info";
    case Level::debug: return "debug";
  }
  return "?";
}

}  // namespace

Level threshold() { return static_cast<Level>(level_storage().load(std::memory_order_relaxed)); }

void set_threshold(Level level) { level_storage().store(static_cast<int>(level)); }

void emit(Level level, std::string_view message) {
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::fprintf(stderr, "[latsteer:%s] %.*s\n", tag(level), static_cast<int>(message.size()), message.data());
}

}  // namespace latsteer::log
