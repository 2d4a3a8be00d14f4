#pragma once

#include <cstdio>
#include <string>

namespace salab {

// Full-precision decimal rendering (17 significant digits) so CSV output
// round-trips doubles exactly and reruns are byte-identical.
inline std::string format_g17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace salab
