#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace gla {

// Seed-stream derivation. Every random draw in the library flows from one
// master seed through derive_seed(master, ids...), so independent units
// (persons, samples, Monte-Carlo systems, training stages) own disjoint
// streams and results do not depend on evaluation order.
namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Mixes a master seed with a list of stream ids into a child seed.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> ids) {
  std::uint64_t s = detail::splitmix64(master);
  for (std::uint64_t id : ids) {
    s = detail::splitmix64(s ^ detail::splitmix64(id + 0x632be59bd9b4e019ULL));
  }
  return s;
}

/// Deterministic random stream. Normal variates use Box-Muller on top of
/// mt19937_64 rather than std::normal_distribution, whose output is
/// implementation-defined; this keeps files byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t master,
                    std::initializer_list<std::uint64_t> ids) {
    return Rng(derive_seed(master, ids));
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal; one Box-Muller pair per call, sine half discarded.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();  // log(0) guard
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo is biased for huge n; all our n are tiny.
    return engine_() % n;
  }

  /// In-place Fisher-Yates (std::shuffle is implementation-defined).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gla
