#include "atsmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

namespace atsmc {

double kolmogorov_sf(double t) {
  if (t <= 0.0) return 1.0;
  if (t < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * t * t);
    s += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double n = static_cast<double>(sa.size());
  const double m = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] <= x) ++i;
    while (j < sb.size() && sb[j] <= x) ++j;
    d = std::max(d, std::abs(i / n - j / m));
  }
  const double en = std::sqrt(n * m / (n + m));
  KsResult r;
  r.statistic = d;
  r.p_value = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
  return r;
}

double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

double chisq_gof_pvalue(std::span<const double> observed,
                        std::span<const double> expected, int fitted_params,
                        double min_expected) {
  if (observed.size() != expected.size() || observed.empty())
    throw std::invalid_argument("chisq_gof_pvalue: bad inputs");
  std::vector<double> obs, exp;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o_acc += observed[i];
    e_acc += expected[i];
    if (e_acc >= min_expected) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0.0) {
    if (exp.empty()) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      exp.back() += e_acc;
    }
  }
  if (exp.size() < 2) return 1.0;
  double stat = 0.0;
  for (std::size_t i = 0; i < exp.size(); ++i) {
    const double d = obs[i] - exp[i];
    stat += d * d / exp[i];
  }
  const double dof = static_cast<double>(exp.size()) - 1.0 - fitted_params;
  if (dof <= 0.0) return 1.0;
  return chi_square_sf(stat, dof);
}

double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double batch_means_se(std::span<const double> series, int num_batches) {
  if (series.size() < static_cast<std::size_t>(2 * num_batches))
    num_batches = std::max(2, static_cast<int>(series.size() / 2));
  const std::size_t batch = series.size() / num_batches;
  std::vector<double> means;
  means.reserve(num_batches);
  for (int b = 0; b < num_batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * batch; i < (b + 1) * batch; ++i) s += series[i];
    means.push_back(s / static_cast<double>(batch));
  }
  return std::sqrt(variance(means) / static_cast<double>(num_batches));
}

}  // namespace atsmc
