#include "strel/logging.hpp"

#include <cstdlib>

namespace strel::log {

int level() {
  static int lvl = [] {
    const char* env = std::getenv("STREL_LOG");
    if (!env) return 1;
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env) return 1;
    if (v < 0) v = 0;
    if (v > 2) v = 2;
    return static_cast<int>(v);
  }();
  return lvl;
}

void error(const std::string& text) {
  std::fprintf(stderr, "[strel] error: %s\n", text.c_str());
}

void info(const std::string& text) {
  if (level() >= 1) std::fprintf(stderr, "[strel] %s\n", text.c_str());
}

void debug(const std::string& text) {
  if (level() >= 2) std::fprintf(stderr, "[strel] debug: %s\n", text.c_str());
}

}  // namespace strel::log
