#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace safepush {

using Vec2 = Eigen::Vector2d;

/// Axis-aligned rectangle, lo <= hi componentwise.
struct Rect {
  Vec2 lo{-2.0, -2.0};
  Vec2 hi{2.0, 2.0};

  bool contains(const Vec2& p) const {
    return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y();
  }

  /// Clamp p into the rectangle shrunk by `inset` on every side.
  Vec2 clamp(const Vec2& p, double inset = 0.0) const {
    return Vec2(std::clamp(p.x(), lo.x() + inset, hi.x() - inset),
                std::clamp(p.y(), lo.y() + inset, hi.y() - inset));
  }

  Vec2 extent() const { return hi - lo; }
};

inline bool is_finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

/// Scale v down to `max_norm` if it is longer; zero vectors pass through.
inline Vec2 clip_to_norm(const Vec2& v, double max_norm) {
  const double n = v.norm();
  if (n <= max_norm || n == 0.0) return v;
  return v * (max_norm / n);
}

constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive an independent stream seed from a base seed and a stream id.
inline uint64_t seed_stream(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x51ed2701a9e38b0dULL));
}

/// Deterministic RNG with hand-rolled distributions so that identical seeds
/// reproduce identical draws regardless of the standard library in use.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(splitmix64(seed ^ 0xd1b54a32d192ed03ULL)) {}

  uint64_t next_u64() {
    // xorshift* over a splitmix-initialized state
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>(uniform01() * static_cast<double>(n)) % n;
  }

  /// Standard normal via Box-Muller (no cached second draw, fixed draw order).
  double normal(double mean = 0.0, double sd = 1.0) {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(2.0 * M_PI * u2);
  }

  Vec2 normal_vec2(double sd) {
    const double x = normal(0.0, sd);
    const double y = normal(0.0, sd);
    return Vec2(x, y);
  }

  Vec2 uniform_in_rect(const Rect& r, double inset = 0.0) {
    const double x = uniform(r.lo.x() + inset, r.hi.x() - inset);
    const double y = uniform(r.lo.y() + inset, r.hi.y() - inset);
    return Vec2(x, y);
  }

 private:
  uint64_t state_;
};

/// Format a double so that parsing the text recovers the exact bits.
std::string format_double(double v);

/// FNV-1a over a byte string; used to fingerprint configs in checkpoints.
uint64_t fnv1a64(const std::string& bytes);

}  // namespace safepush
