#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace rloc {

// Deterministic noise contract, stable across platforms and releases:
//
//   * Stream seeds come from chained SplitMix64 finalizer steps:
//       seed = mix64(mix64(mix64(master) + trial_index) + stream_tag)
//   * The engine is std::mt19937_64, whose output sequence is fully
//     specified by the C++ standard.
//   * uniform01() maps one engine output to [0,1) as (u >> 11) * 2^-53.
//   * normal() is cosine-branch Box-Muller: each call consumes exactly two
//     engine outputs u1, u2 and returns sqrt(-2 ln(1-u1)) * cos(2 pi u2).
//
// Anything that draws noise goes through NoiseStream, so regenerating a
// measurement set from the same key is bit-identical.

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Stream tags keep parallel trials and modalities on disjoint streams.
enum class StreamTag : std::uint64_t {
  Scenario = 1,
  Toa = 2,
  Tdoa = 3,
  Aoa = 4,
  Rss = 5,
};

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t trial,
                                 StreamTag tag) {
  return mix64(mix64(mix64(master) + trial) + static_cast<std::uint64_t>(tag));
}

class NoiseStream {
 public:
  NoiseStream(std::uint64_t master, std::uint64_t trial, StreamTag tag)
      : engine_(stream_seed(master, trial, tag)) {}

  /// Uniform on [0, 1), one engine output.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  /// Standard normal, exactly two engine outputs per call.
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Scaled normal. Always consumes its two engine outputs, so stream
  /// positions do not depend on parameter values (sigma * z == 0 at sigma 0).
  double normal(double sigma) { return sigma * normal(); }

 private:
  std::mt19937_64 engine_;
};

/// FNV-1a, used for config hashes in provenance blocks.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace rloc
