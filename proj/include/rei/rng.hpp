#pragma once

#include <cmath>
#include <cstdint>

namespace rei {

// Deterministic substream RNG. Every consumer of randomness derives its own
// stream from (seed, iteration, purpose), so plans can be regenerated
// externally and execution order / worker count never changes a draw.
//
// Derivation: the 64-bit key material is folded through the SplitMix64
// finalizer, then the four xoshiro256++ state words are produced by iterating
// SplitMix64. Distributions use only the stream's own output (normal via
// Marsaglia polar with a cached spare, exponential via inverse CDF, Poisson(1)
// via Knuth's product method), never std::<distribution>, which is
// implementation-defined.

enum class StreamPurpose : std::uint64_t {
  Plan = 1,          // per-iteration resample/reweight draws
  SecantInit = 2,    // initial quasi-Newton directions
  SecantRefresh = 3, // while-loop refresh directions
  Mala = 4,          // MALA proposals and accept/reject uniforms
  Dgp = 5,           // synthetic dataset simulation
  Replication = 6,   // per-replication base seeds in Monte Carlo studies
  Start = 7,         // starting-value perturbations
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

} // namespace detail

class RngStream {
public:
  RngStream() : RngStream(0, 0, StreamPurpose::Plan) {}

  RngStream(std::uint64_t seed, std::uint64_t iteration, StreamPurpose purpose) {
    std::uint64_t key = seed;
    detail::splitmix64(key);
    key ^= 0xD1B54A32D192ED03ULL * (iteration + 1);
    detail::splitmix64(key);
    key ^= 0x8CB92BA72F3D8DD7ULL * static_cast<std::uint64_t>(purpose);
    for (auto& word : state_) word = detail::splitmix64(key);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0,1), 53-bit mantissa, never exactly 0 or 1.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound) by rejection, bias-free.
  std::uint64_t uniform_int(std::uint64_t bound) {
    const std::uint64_t threshold = (0ULL - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal, Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // Exponential with mean 1.
  double exponential() { return -std::log(uniform()); }

  // Poisson with rate 1 (Knuth product method; cheap at this rate).
  int poisson_unit() {
    const double limit = std::exp(-1.0);
    int k = 0;
    double p = 1.0;
    for (;;) {
      p *= uniform();
      if (p <= limit) return k;
      ++k;
    }
  }

private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RngStream derive_stream(std::uint64_t seed, std::uint64_t iteration,
                               StreamPurpose purpose) {
  return RngStream(seed, iteration, purpose);
}

// Base seed for replication r of a Monte Carlo study.
inline std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t rep) {
  RngStream s(seed, rep, StreamPurpose::Replication);
  return s.next_u64();
}

} // namespace rei
