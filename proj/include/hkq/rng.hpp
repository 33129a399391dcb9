#pragma once

#include <cmath>
#include <cstdint>

#include "hkq/errors.hpp"

namespace hkq {

// Finalizer from splitmix64 (Steele, Lea, Flood 2014): bijective avalanche mix.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// Purpose tags for sub-stream seed derivation. Every independent random
// stream (one per set, per noise pass, per training step, per inference draw)
// gets its own seed so results do not depend on thread count or call order.
enum class Stream : std::uint64_t {
  envelope = 1,
  noise = 2,
  table = 3,
  grid = 4,
  model_init = 5,
  train_batch = 6,
  elbo_noise = 7,
  predict_draw = 8,
  dataset = 9,
};

// derive_seed(master, index, purpose) = mix64(mix64(mix64(master) ^ index) ^ tag).
// Documented contract: stable across platforms and releases of this library.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, Stream purpose) {
  return mix64(mix64(mix64(master) ^ index) ^ static_cast<std::uint64_t>(purpose));
}

// Counter-based generator: splitmix64. The state advances by a fixed odd
// constant and each output is an avalanche mix of the counter, so streams
// seeded by derive_seed are statistically independent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); rejects exact zeros.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  // Standard normal via the Marsaglia polar method; the spare variate is
  // cached, so a stream yields a reproducible sequence regardless of how
  // callers interleave normal() and uniform().
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
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // Rayleigh with scale sigma via inverse CDF.
  double rayleigh(double sigma) { return sigma * std::sqrt(-2.0 * std::log(uniform_pos())); }

  // Gamma(shape, 1) via Marsaglia and Tsang (2000) squeeze/rejection.
  // Shapes below 1 are boosted: sample at shape+1 and scale by U^{1/shape}.
  double gamma(double shape) {
    require(shape > 0.0, errc::parameter_domain, "gamma shape must be > 0");
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = (1.0 / 3.0) / std::sqrt(d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hkq
