#ifndef ATTRLAB_RNG_HPP
#define ATTRLAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace attrlab {

using Rng = std::mt19937_64;

// splitmix64; used to decorrelate derived seeds and for cheap per-record
// streams where constructing a full mt19937_64 would dominate.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0) {
  return splitmix64(splitmix64(seed ^ (a * 0x9e3779b97f4a7c15ULL)) ^ b);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Uniform draw on [0, 1) consuming exactly one engine output. We avoid
/// std::uniform_real_distribution so draw sequences are pinned to the engine
/// stream, not to the standard library's distribution internals.
inline double runif(Rng& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double runif(Rng& g, double lo, double hi) {
  return lo + (hi - lo) * runif(g);
}

/// Standard normal via Box-Muller; consumes exactly two engine outputs.
inline double rnorm(Rng& g) {
  double u1 = runif(g);
  double u2 = runif(g);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(6.283185307179586476925286766559 * u2);
}

inline int rbernoulli(Rng& g, double p) { return runif(g) < p ? 1 : 0; }

/// Minimal counter-based stream for per-record imputation draws: a fresh
/// logical stream per (seed, draw, record) triple without per-record engine
/// construction cost.
class SplitStream {
 public:
  SplitStream(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
      : state_(mix_seed(seed, a, b)) {}

  double uniform() {
    state_ = splitmix64(state_);
    return static_cast<double>(state_ >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

}  // namespace attrlab

#endif
