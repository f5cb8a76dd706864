#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "atsmc/numeric.hpp"

namespace testsupport {

// Piecewise adaptive quadrature; robust to peaks much narrower than the
// interval, which plain adaptive Simpson can step over.
inline double integrate_segmented(const std::function<double(double)>& f,
                                  double lo, double hi, int segments,
                                  double tol) {
  double total = 0.0;
  for (int s = 0; s < segments; ++s) {
    const double a = lo + (hi - lo) * s / segments;
    const double b = lo + (hi - lo) * (s + 1) / segments;
    total += atsmc::integrate(f, a, b, tol / segments);
  }
  return total;
}

// Normalize an unnormalized log density over [lo, hi] by quadrature and
// evaluate the normalized density at the given points.
inline std::vector<double> normalized_density(
    const std::function<double(double)>& log_target,
    std::span<const double> points, double lo, double hi) {
  double peak = -std::numeric_limits<double>::infinity();
  const int scan = 400;
  for (int i = 0; i <= scan; ++i)
    peak = std::max(peak, log_target(lo + (hi - lo) * i / scan));
  const double z = integrate_segmented(
      [&](double x) { return std::exp(log_target(x) - peak); }, lo, hi, 40, 1e-12);
  std::vector<double> out;
  out.reserve(points.size());
  for (double p : points)
    out.push_back(std::exp(log_target(p) - peak) / z);
  return out;
}

// Largest relative gap between two positive density evaluations.
inline double max_rel_gap(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline std::vector<double> normalize_log_masses(std::span<const double> lm) {
  const double lse = atsmc::log_sum_exp(lm);
  std::vector<double> out(lm.size());
  for (std::size_t i = 0; i < lm.size(); ++i) out[i] = std::exp(lm[i] - lse);
  return out;
}

}  // namespace testsupport

#include <algorithm>

#include "atsmc/stats.hpp"

namespace testsupport {

// One-sample Kolmogorov-Smirnov test against an analytic CDF.
inline atsmc::KsResult ks_one_sample(std::vector<double> sample,
                                     const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - (i + 1) / n));
    d = std::max(d, std::abs(f - i / n));
  }
  atsmc::KsResult r;
  r.statistic = d;
  const double en = std::sqrt(n);
  r.p_value = atsmc::kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
  return r;
}

}  // namespace testsupport
