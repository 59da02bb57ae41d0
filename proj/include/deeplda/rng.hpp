#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace deeplda {

// All sampling goes through these helpers rather than the std distributions,
// whose output sequences are implementation-defined. mt19937_64 itself is
// fully specified, so runs are bit-reproducible for a given seed.
using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent stream for (seed, stream_id); used to decouple e.g. the
/// train/test draws and the per-epoch shuffles.
inline Rng make_rng(uint64_t seed, uint64_t stream_id = 0) {
  uint64_t s = seed ^ (0x6a09e667f3bcc909ULL + stream_id * 0x9e3779b97f4a7c15ULL);
  splitmix64(s);
  return Rng(splitmix64(s));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller (one value per call, cosine branch).
inline double standard_normal(Rng& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Uniform integer in [0, n) by rejection, exact for any n >= 1.
inline uint64_t uniform_index(Rng& rng, uint64_t n) {
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % n;
}

/// Draw a class index from probabilities summing to 1 (inverse CDF).
inline int categorical(Rng& rng, const std::vector<double>& probs) {
  const double u = uniform_unit(rng);
  double acc = 0.0;
  for (size_t c = 0; c + 1 < probs.size(); ++c) {
    acc += probs[c];
    if (u < acc) return static_cast<int>(c);
  }
  return static_cast<int>(probs.size()) - 1;
}

/// In-place Fisher-Yates shuffle.
template <typename T>
void fisher_yates(std::vector<T>& items, Rng& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace deeplda
