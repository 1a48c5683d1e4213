#pragma once

#include <chrono>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pucpi {

/// Failure raised by the numerical pipeline or its I/O. The stage tag names the
/// component that failed (mesh, cover, fem, eigcore, local, reduce, runtime, cli).
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}

namespace log {

enum class Level { quiet = 0, info = 1, debug = 2 };

void set_level(Level level);
Level level();
void write(Level level, std::string_view message);

template <typename... Args>
void info(Args&&... args) {
  if (level() >= Level::info) write(Level::info, concat(std::forward<Args>(args)...));
}

template <typename... Args>
void debug(Args&&... args) {
  if (level() >= Level::debug) write(Level::debug, concat(std::forward<Args>(args)...));
}

template <typename... Args>
void warn(Args&&... args) {
  write(Level::quiet, concat("warning: ", std::forward<Args>(args)...));
}

}  // namespace log

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  void reset() { start_ = std::chrono::steady_clock::now(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// 64-bit FNV-1a. Integrity check for task and result files, not a cryptographic hash.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);
std::string to_hex(std::uint64_t value);

/// Formats a double with 17 significant digits so that text round trips are exact.
std::string format_exact(double value);

}  // namespace pucpi
