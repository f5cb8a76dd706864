#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace atsmc {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

inline double norm_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

inline double norm_pdf(double x, double mean, double var) {
  return std::exp(norm_logpdf(x, mean, var));
}

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_sum_exp(std::span<const double> values);

/// log(1 - e^x) for x < 0, stable near both ends.
inline double log1m_exp(double x) {
  if (x >= 0.0) return -std::numeric_limits<double>::infinity();
  return x > -0.6931471805599453 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

/// Adaptive Simpson quadrature on [a,b] to absolute tolerance.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol);

/// Integral of f over [a, +inf) for integrands with (at least) exponential
/// decay; sums adaptive-Simpson panels of doubling width until two consecutive
/// panels fall below tolerance.
double integrate_upper_tail(const std::function<double(double)>& f, double a,
                            double abs_tol);

/// Solve fn(x) = target for a strictly decreasing fn on (0, inf). Bracket is
/// found by geometric expansion from the hint, then bisection to the relative
/// tolerance. Throws std::domain_error when no bracket exists (target above
/// the reachable range) and std::runtime_error on non-convergence.
double invert_decreasing(const std::function<double(double)>& fn, double target,
                         double hint, double rel_tol = 1e-10);

double trapezoid(std::span<const double> x, std::span<const double> y);

/// Weighted quantile with linear weights (not necessarily normalized).
double weighted_quantile(std::span<const double> values,
                         std::span<const double> weights, double q);

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Lower Cholesky factor of a row-major SPD matrix.
std::vector<double> cholesky(std::span<const double> a, int n);

/// Solve (L L^T) x = b given the lower factor L.
std::vector<double> cholesky_solve(std::span<const double> lower,
                                   std::span<const double> b, int n);

/// Solve L^T x = b given the lower factor L (back substitution).
std::vector<double> cholesky_solve_lt(std::span<const double> lower,
                                      std::span<const double> b, int n);

}  // namespace atsmc
