#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "twinmap/common.hpp"

namespace twinmap {

/// Deterministic random stream. The engine is std::mt19937_64 (its output
/// sequence is fixed by the standard); the bit-to-double conversions are
/// spelled out here instead of using std::uniform_real_distribution /
/// std::normal_distribution, whose algorithms vary across standard libraries.
/// Equal seeds therefore give bit-identical draws on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi). Written as lo + (hi - lo) * u so a degenerate
  /// interval returns exactly lo.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes two uniforms per pair and
  /// caches the second value.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Integer in [0, n). Rejection-free scaling is fine here: n is always far
  /// below 2^53 in this codebase, so the bias is < 2^-40.
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "rng: below(0)");
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// splitmix64 finalizer over (a, b); used to derive independent stream seeds
/// (e.g. per-target-seed noise streams) without overlapping the base streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace twinmap
