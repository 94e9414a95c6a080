#include "log.hpp"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>
#include <string>

namespace pxd::log {

namespace {

Level parse_level(const char* env) {
  if (env == nullptr) return Level::warn;
  std::string v(env);
  if (v == "error" || v == "0") return Level::error;
  if (v == "warn" || v == "1") return Level::warn;
  if (v == "info" || v == "2") return Level::info;
  if (v == "debug" || v == "3") return Level::debug;
  return Level::warn;
}

const char* tag(Level l) {
  switch (l) {
    case Level::error: return "error";
    case Level::warn: return "warn";
    case Level::info: return "info";
    case Level::debug: return "debug";
  }
  return "?";
}

}  // namespace

Level threshold() {
  static const Level level = parse_level(std::getenv("PIXELDISTILL_LOG"));
  return level;
}

void write(Level level, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[pixeldistill " << tag(level) << "] " << msg << '\n';
}

}  // namespace pxd::log
