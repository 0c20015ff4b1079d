#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace strel {

// Error taxonomy. The CLI maps these onto distinct exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or contradictory configuration (bad keys, invalid combinations).
struct ConfigError : Error {
  using Error::Error;
};

// Tensor shape / dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Violated value-level contracts (coordinates out of range, labels not 0/1, ...).
struct ValueError : Error {
  using Error::Error;
};

// Unparseable input files; message carries the line number where known.
struct ParseError : Error {
  using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
  using Error::Error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string msg(const Parts&... parts) {
  std::ostringstream os;
  detail::format_into(os, parts...);
  return os.str();
}

}  // namespace strel
