#include "safepush/common.hpp"

#include <cstdio>

namespace safepush {

std::string format_double(double v) {
  char buf[40];
  // 17 significant digits round-trip any IEEE double through text.
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace safepush
