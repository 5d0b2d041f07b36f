#include "bqo/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace bqo::log {
namespace {

Level from_env() {
  const char* raw = std::getenv("BQO_LOG");
  if (raw == nullptr) return Level::info;
  const std::string value(raw);
  if (value == "error") return Level::error;
  if (value == "debug") return Level::debug;
  return Level::info;
}

std::atomic<int>& current() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

const char* tag(Level level) {
  switch (level) {
    case Level::error: return "error";
    case Level::info: return "info";
    case Level::debug: return "debug";
  }
  return "";
}

}  // namespace

Level threshold() { return static_cast<Level>(current().load()); }

void set_threshold(Level level) { current() = static_cast<int>(level); }

void write(Level level, std::string_view message) {
  if (static_cast<int>(level) > current().load()) return;
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  std::cerr << "[bqo " << tag(level) << "] " << message << '\n';
}

}  // namespace bqo::log
