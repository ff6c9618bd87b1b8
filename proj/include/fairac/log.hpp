#pragma once

#include <atomic>
#include <iostream>
#include <sstream>
#include <string_view>

namespace fairac::log {

enum class Level { debug = 0, info = 1, warn = 2, quiet = 3 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::warn};
  return level;
}

inline void set_level(Level l) { threshold().store(l); }

template <typename... Args>
void write(Level l, std::string_view tag, const Args&... args) {
  if (l < threshold().load()) return;
  std::ostringstream os;
  os << "[fairac:" << tag << "] ";
  (os << ... << args);
  os << '\n';
  std::clog << os.str();
}

template <typename... Args>
void debug(const Args&... args) { write(Level::debug, "debug", args...); }
template <typename... Args>
void info(const Args&... args) { write(Level::info, "info", args...); }
template <typename... Args>
void warn(const Args&... args) { write(Level::warn, "warn", args...); }

}  // namespace fairac::log
