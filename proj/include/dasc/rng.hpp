#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace dasc {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-style seed derivation: every random stream in the pipeline is keyed
/// by (base seed, tags...) so that results never depend on call order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = splitmix64(base);
  for (std::uint64_t t : tags) s = splitmix64(s ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

/// Stream tags used with derive_seed.
enum class Stream : std::uint64_t {
  kInit = 1,
  kBatchOrder = 2,
  kAugment = 3,
  kSynthGeometry = 4,
  kSynthTexture = 5,
  kSynthIntensity = 6,
  kSplit = 7,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

// Distribution helpers with a fixed algorithm, unlike the <random>
// distributions whose output is left to the library vendor.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace dasc
