#pragma once

#include <cstdio>
#include <string>

namespace casseg {

// %.17g round-trips IEEE doubles exactly, so files written with it are
// byte-stable across reruns.
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace casseg
