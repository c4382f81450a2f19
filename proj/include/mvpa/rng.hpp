#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>

namespace mvpa {

// SplitMix64 finalizer. The generator below is counter-based: output k is a
// pure function of (seed, k), so draws are reproducible bit-for-bit across
// platforms and independent of call batching.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(seed ^ mix64(0x9E3779B97F4A7C15ull * (stream + 1)))), ctr_(0) {}

  // Derives an independent stream from the same master seed. Streams with
  // distinct ids never share a counter sequence.
  static Rng stream_of(std::uint64_t seed, std::uint64_t stream) { return Rng(seed, stream); }

  std::uint64_t next_u64() { return mix64(key_ + 0x9E3779B97F4A7C15ull * ++ctr_); }

  // Uniform in [0,1), 53-bit mantissa.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0,1]; safe as a log() argument.
  double next_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Uniform integer in [0, n). Lemire multiply-shift; deterministic, one draw.
  std::uint64_t next_below(std::uint64_t n) {
    assert(n > 0);
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller. Consumes two draws; no cached second value so the counter
  // advance per call is fixed.
  double next_gaussian() {
    const double u1 = next_open();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_;
};

}  // namespace mvpa
