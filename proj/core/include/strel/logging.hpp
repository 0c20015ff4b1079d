#pragma once

#include <cstdio>
#include <string>

namespace strel::log {

// Verbosity is controlled by the STREL_LOG environment variable:
// 0 = errors only, 1 = info (default), 2 = debug.
int level();

void error(const std::string& text);
void info(const std::string& text);
void debug(const std::string& text);

}  // namespace strel::log
