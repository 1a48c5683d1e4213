#include "pucpi/common.hpp"

#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>

namespace pucpi {

namespace log {
namespace {
std::atomic<int> g_level{static_cast<int>(Level::quiet)};
std::mutex g_mutex;
}  // namespace

void set_level(Level level) { g_level = static_cast<int>(level); }
Level level() { return static_cast<Level>(g_level.load()); }

void write(Level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  std::cerr << message << '\n';
}
}  // namespace log

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t hash = seed;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string format_exact(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

}  // namespace pucpi
