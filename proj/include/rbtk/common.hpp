#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rbtk {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;

using cplx = std::complex<double>;

/// Bad static configuration (rejected before any computation). CLI exit code 1.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem / serialization failure. CLI exit code 2.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numeric failure at run time: aliasing, degenerate input, lost track,
/// diverged training. CLI exit code 3.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from (base, stream). Used to give every
/// frame / epoch / object its own RNG so parallel and serial runs agree.
inline uint64_t mix_seed(uint64_t base, uint64_t stream) {
  return splitmix64(splitmix64(base) ^ (stream + 0x9e3779b97f4a7c15ULL));
}

inline uint64_t mix_seed(uint64_t base, uint64_t s1, uint64_t s2) {
  return mix_seed(mix_seed(base, s1), s2);
}

/// Deterministic RNG with hand-rolled distributions. std::mt19937_64 output is
/// pinned by the standard, and the Box-Muller / inversion transforms below are
/// plain arithmetic, so streams are bit-identical across compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  /// Uniform in (0, 1]; never returns 0 so log() is safe.
  double uniform01() {
    return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Inclusive on both ends.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(eng_() % static_cast<uint64_t>(hi - lo + 1));
  }

  /// Standard normal (Box-Muller).
  double gaussian() {
    const double r = std::sqrt(-2.0 * std::log(uniform01()));
    return r * std::cos(2.0 * kPi * uniform01());
  }

  /// Circular complex Gaussian of total variance `var` (var/2 per component).
  cplx cgaussian(double var) {
    const double r = std::sqrt(-var * std::log(uniform01()));
    const double phi = 2.0 * kPi * uniform01();
    return {r * std::cos(phi), r * std::sin(phi)};
  }

 private:
  std::mt19937_64 eng_;
};

inline uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rbtk
