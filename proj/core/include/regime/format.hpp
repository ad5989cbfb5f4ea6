#pragma once

#include <cstdio>
#include <string>

namespace regime {

/// Decimal text with 17 significant digits: round-trips to the same double.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace regime
