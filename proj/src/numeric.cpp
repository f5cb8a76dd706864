#include "atsmc/numeric.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace atsmc {

double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

namespace {

double simpson(double fa, double fm, double fb, double h) {
  return h / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_step(const std::function<double(double)>& f, double a, double b,
                     double fa, double fm, double fb, double whole, double tol,
                     int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(fa, flm, fm, m - a);
  const double right = simpson(fm, frm, fb, b - m);
  const double delta = left + right - whole;
  // a non-finite estimate cannot be refined; stop rather than recurse
  if (depth <= 0 || !(std::abs(delta) > 15.0 * tol))
    return left + right + delta / 15.0;
  return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = simpson(fa, fm, fb, b - a);
  return adaptive_step(f, a, b, fa, fm, fb, whole, abs_tol, 48);
}

double integrate_upper_tail(const std::function<double(double)>& f, double a,
                            double abs_tol) {
  double total = 0.0;
  double lo = a;
  double width = std::max(1.0, std::abs(a) * 0.5);
  int small_panels = 0;
  for (int panel = 0; panel < 200; ++panel) {
    const double hi = lo + width;
    const double part = integrate(f, lo, hi, abs_tol * 0.25);
    total += part;
    if (std::abs(part) < abs_tol * 0.25) {
      if (++small_panels >= 2) return total;
    } else {
      small_panels = 0;
    }
    lo = hi;
    width *= 2.0;
  }
  throw std::runtime_error("integrate_upper_tail: integrand does not decay");
}

double invert_decreasing(const std::function<double(double)>& fn, double target,
                         double hint, double rel_tol) {
  if (!(hint > 0.0)) throw std::domain_error("invert_decreasing: hint must be positive");
  if (!std::isfinite(target)) throw std::domain_error("invert_decreasing: target not finite");
  double lo = hint, hi = hint;
  double flo = fn(lo);
  // Expand left until fn(lo) >= target. A decreasing fn grows toward 0+, so a
  // failure after ~1080 halvings means the target exceeds the total mass.
  int guard = 0;
  while (flo < target) {
    hi = lo;
    lo *= 0.5;
    if (++guard > 1080)
      throw std::domain_error("invert_decreasing: target above reachable range");
    flo = fn(lo);
  }
  double fhi = fn(hi);
  guard = 0;
  while (fhi > target) {
    hi *= 2.0;
    if (++guard > 1080)
      throw std::domain_error("invert_decreasing: target below reachable range");
    fhi = fn(hi);
  }
  for (int iter = 0; iter < 2000; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= rel_tol * mid + 1e-300) return mid;
    if (fn(mid) >= target)
      lo = mid;
    else
      hi = mid;
  }
  throw std::runtime_error("invert_decreasing: bisection failed to converge");
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("trapezoid: size mismatch");
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

double weighted_quantile(std::span<const double> values,
                         std::span<const double> weights, double q) {
  if (values.size() != weights.size() || values.empty())
    throw std::invalid_argument("weighted_quantile: bad inputs");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  double total = 0.0;
  for (double w : weights) total += w;
  double acc = 0.0;
  for (std::size_t i : order) {
    acc += weights[i];
    if (acc >= q * total) return values[i];
  }
  return values[order.back()];
}

std::vector<double> cholesky(std::span<const double> a, int n) {
  std::vector<double> lower(n * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (int k = 0; k < j; ++k) s -= lower[i * n + k] * lower[j * n + k];
      if (i == j) {
        if (!(s > 0.0)) throw std::runtime_error("cholesky: matrix not positive definite");
        lower[i * n + i] = std::sqrt(s);
      } else {
        lower[i * n + j] = s / lower[j * n + j];
      }
    }
  }
  return lower;
}

std::vector<double> cholesky_solve(std::span<const double> lower,
                                   std::span<const double> b, int n) {
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= lower[i * n + k] * y[k];
    y[i] = s / lower[i * n + i];
  }
  std::vector<double> x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int k = i + 1; k < n; ++k) s -= lower[k * n + i] * x[k];
    x[i] = s / lower[i * n + i];
  }
  return x;
}

std::vector<double> cholesky_solve_lt(std::span<const double> lower,
                                      std::span<const double> b, int n) {
  std::vector<double> x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= lower[k * n + i] * x[k];
    x[i] = s / lower[i * n + i];
  }
  return x;
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (threads <= 1 || n < 2) {
    body(0, n);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace atsmc
