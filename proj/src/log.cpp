#include "feedloop/log.hpp"

#include "feedloop/errors.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace feedloop::log {

namespace {
std::atomic<Level> g_level{Level::warn};
std::mutex g_write_mutex;

const char* label(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    default: return "?";
  }
}
}  // namespace

void set_level(Level level) { g_level.store(level); }

Level level() { return g_level.load(); }

Level parse_level(const std::string& name) {
  if (name == "debug") return Level::debug;
  if (name == "info") return Level::info;
  if (name == "warn") return Level::warn;
  if (name == "error") return Level::error;
  if (name == "off") return Level::off;
  throw ConfigError("unknown log level '" + name + "' (expected debug|info|warn|error|off)");
}

void write(Level lvl, const std::string& message) {
  if (static_cast<int>(lvl) < static_cast<int>(g_level.load())) return;
  std::lock_guard<std::mutex> lock(g_write_mutex);
  std::cerr << "[" << label(lvl) << "] " << message << "\n";
}

}  // namespace feedloop::log
