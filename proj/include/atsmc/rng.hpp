#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>

namespace atsmc {

// splitmix64 finalizer, used to whiten seeds when deriving streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Random number handle. One per logical task; streams derived from a master
/// seed, a phase tag and a particle index are independent by construction and
/// make particle-parallel execution deterministic regardless of thread count.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static Rng stream(std::uint64_t master, std::uint64_t phase, std::uint64_t index) {
    std::uint64_t s = splitmix64(master);
    s = splitmix64(s ^ (0x9e3779b97f4a7c15ULL * (phase + 1)));
    s = splitmix64(s ^ (0xbf58476d1ce4e5b9ULL * (index + 1)));
    return Rng(s);
  }

  std::mt19937_64& engine() { return engine_; }

  /// U(0,1); may return 0.
  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  /// U(0,1) guaranteed strictly inside the open interval.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0 || u >= 1.0);
    return u;
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(engine_);
  }

  /// Gamma with given shape and *rate* (mean = shape/rate).
  double gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0))
      throw std::domain_error("Rng::gamma: shape and rate must be positive");
    return std::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
  }

  double beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0))
      throw std::domain_error("Rng::beta: parameters must be positive");
    for (;;) {
      const double x = std::gamma_distribution<double>(a, 1.0)(engine_);
      const double y = std::gamma_distribution<double>(b, 1.0)(engine_);
      if (x + y > 0.0) return x / (x + y);
    }
  }

  /// log of a Gamma(shape, 1) draw, exact for small shapes where the draw
  /// itself would underflow (uses the shape+1 boost G * U^{1/shape}).
  double log_gamma_draw(double shape) {
    if (!(shape > 0.0))
      throw std::domain_error("Rng::log_gamma_draw: shape must be positive");
    if (shape >= 1.0)
      return std::log(std::gamma_distribution<double>(shape, 1.0)(engine_));
    const double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(engine_);
    return std::log(g) + std::log(uniform_pos()) / shape;
  }

  /// Beta draw returned as (value, log(1 - value)); the log complement stays
  /// exact even when the value itself saturates at 1.
  std::pair<double, double> beta_with_log1m(double a, double b) {
    const double log_x = log_gamma_draw(a);
    const double log_y = log_gamma_draw(b);
    const double m = std::max(log_x, log_y);
    const double lse = m + std::log(std::exp(log_x - m) + std::exp(log_y - m));
    double value = std::exp(log_x - lse);
    if (!(value > 0.0)) value = 1e-300;  // the complement carries the truth
    return {value, log_y - lse};
  }

  double exponential(double rate = 1.0) {
    return std::exponential_distribution<double>(rate)(engine_);
  }

  long poisson(double mean) {
    return std::poisson_distribution<long>(mean)(engine_);
  }

  /// Geometric on {0,1,2,...} with success probability p.
  long geometric(double p) {
    if (!(p > 0.0) || !(p < 1.0))
      throw std::domain_error("Rng::geometric: p must lie in (0,1)");
    return std::geometric_distribution<long>(p)(engine_);
  }

  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace atsmc
