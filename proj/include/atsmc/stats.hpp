#pragma once

#include <span>
#include <vector>

namespace atsmc {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Survival function of the Kolmogorov distribution, Q(t) = 2 sum (-1)^{k-1} e^{-2k^2t^2}.
double kolmogorov_sf(double t);

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
double chi_square_sf(double x, double dof);

/// Pearson chi-square goodness-of-fit p-value. Bins with expected count below
/// `min_expected` are pooled into their neighbour.
double chisq_gof_pvalue(std::span<const double> observed,
                        std::span<const double> expected,
                        int fitted_params = 0, double min_expected = 5.0);

double mean(std::span<const double> x);
double variance(std::span<const double> x);

/// Monte Carlo standard error of the mean of a correlated series, by
/// non-overlapping batch means.
double batch_means_se(std::span<const double> series, int num_batches = 32);

}  // namespace atsmc
