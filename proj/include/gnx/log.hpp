#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace gnx::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

/// Verbosity from the GE_LOG environment variable (quiet, warn, info, debug); warn by default.
inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("GE_LOG");
    const std::string v = env ? env : "";
    if (v == "quiet" || v == "0") return Level::Quiet;
    if (v == "info" || v == "2") return Level::Info;
    if (v == "debug" || v == "3") return Level::Debug;
    return Level::Warn;
  }();
  return lvl;
}

inline void emit(Level at, const char* tag, const std::string& msg) {
  if (static_cast<int>(level()) >= static_cast<int>(at)) std::cerr << '[' << tag << "] " << msg << '\n';
}

inline void warn(const std::string& msg) { emit(Level::Warn, "warn", msg); }
inline void info(const std::string& msg) { emit(Level::Info, "info", msg); }
inline void debug(const std::string& msg) { emit(Level::Debug, "debug", msg); }

}  // namespace gnx::log
