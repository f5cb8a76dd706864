#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "atsmc/rng.hpp"

namespace atsmc {

/// Folded-t prior with density proportional to (1 + x/A)^{-(nu+1)/2} on x > 0.
/// For nu = 1 this is improper; an optional upper bound makes it proper for
/// joint-distribution testing while leaving posterior factors unchanged below
/// the bound.
struct FoldedT {
  double nu = 1.0;
  double A = 1.0;
  std::optional<double> upper{};

  double logpdf(double x) const {
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    if (upper && x > *upper) return -std::numeric_limits<double>::infinity();
    return -0.5 * (nu + 1.0) * std::log1p(x / A);
  }

  /// Inverse-CDF draw; requires an upper bound (the unbounded nu = 1 case has
  /// infinite mass).
  double sample(Rng& rng) const {
    if (!upper) throw std::domain_error("FoldedT::sample: needs an upper bound");
    const double u = rng.uniform_pos();
    const double e = 0.5 * (1.0 - nu);  // antiderivative exponent
    if (std::abs(nu - 1.0) < 1e-12) {
      const double c = std::log1p(*upper / A);
      return A * std::expm1(u * c);
    }
    const double top = std::pow(1.0 + *upper / A, e) - 1.0;
    return A * (std::pow(1.0 + u * top, 1.0 / e) - 1.0);
  }
};

inline double beta_logpdf(double x, double a, double b) {
  if (!(x > 0.0) || !(x < 1.0)) return -std::numeric_limits<double>::infinity();
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
         (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

inline double gamma_logpdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) + (shape - 1.0) * std::log(x) - rate * x -
         std::lgamma(shape);
}

}  // namespace atsmc
