#pragma once

#include <iostream>
#include <string_view>

namespace dkph::log {

enum class Level { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3, kSilent = 4 };

/// Process-wide threshold; set once at startup (CLI flag or test main).
inline Level& threshold() {
  static Level level = Level::kInfo;
  return level;
}

inline void write(Level level, std::string_view tag, std::string_view message) {
  if (level < threshold()) return;
  std::clog << "[" << tag << "] " << message << '\n';
}

inline void info(std::string_view message) { write(Level::kInfo, "info", message); }
inline void warn(std::string_view message) { write(Level::kWarning, "warn", message); }
inline void debug(std::string_view message) { write(Level::kDebug, "debug", message); }

}  // namespace dkph::log
