#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <boost/math/special_functions/expint.hpp>

#include "atsmc/numeric.hpp"
#include "atsmc/rng.hpp"
#include "atsmc/stats.hpp"

using namespace atsmc;

TEST_CASE("adaptive quadrature matches closed forms") {
  const double s = integrate([](double x) { return std::sin(x); }, 0.0, M_PI, 1e-12);
  CHECK(std::abs(s - 2.0) < 1e-10);
  const double g = integrate([](double x) { return std::exp(-x * x / 2); },
                             -8.0, 8.0, 1e-12);
  CHECK(std::abs(g - std::sqrt(2.0 * M_PI)) < 1e-10);
}

TEST_CASE("upper-tail quadrature reproduces the exponential integral") {
  for (double x : {0.05, 0.1, 0.5, 1.0, 3.0, 10.0}) {
    const double mine = integrate_upper_tail(
        [](double y) { return std::exp(-y) / y; }, x, 1e-10);
    const double ref = boost::math::expint(1, x);
    CHECK(std::abs(mine - ref) < 1e-9);
  }
}

TEST_CASE("decreasing-function inversion") {
  auto fn = [](double x) { return std::exp(-x); };
  const double x = invert_decreasing(fn, 0.2, 1.0);
  CHECK(std::abs(x - (-std::log(0.2))) < 1e-9);
  CHECK_THROWS(invert_decreasing([](double x) { return 1.0 / (1.0 + x); }, 2.0, 1.0));
}

TEST_CASE("log-sum-exp basics") {
  std::vector<double> v{-1000.0, -1000.0};
  CHECK(std::abs(log_sum_exp(v) - (-1000.0 + std::log(2.0))) < 1e-12);
  CHECK(log_add_exp(-std::numeric_limits<double>::infinity(), -3.0) ==
        doctest::Approx(-3.0));
}

TEST_CASE("cholesky solve") {
  // A = [[4,2],[2,3]], b = [2,5] -> x = [-1/2, 2]
  std::vector<double> a{4, 2, 2, 3};
  std::vector<double> b{2, 5};
  const auto l = cholesky(a, 2);
  const auto x = cholesky_solve(l, b, 2);
  CHECK(x[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("weighted quantile and trapezoid") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  std::vector<double> w{1.0, 1.0, 1.0, 1.0};
  CHECK(weighted_quantile(v, w, 0.5) == doctest::Approx(2.0));
  std::vector<double> x{0.0, 0.5, 1.0};
  std::vector<double> y{0.0, 0.5, 1.0};
  CHECK(trapezoid(x, y) == doctest::Approx(0.5));
}

TEST_CASE("batch means standard error shrinks like 1/sqrt(n)") {
  Rng rng(7);
  std::vector<double> shortrun(2000), longrun(32000);
  for (auto& v : shortrun) v = rng.normal();
  for (auto& v : longrun) v = rng.normal();
  const double se_short = batch_means_se(shortrun);
  const double se_long = batch_means_se(longrun);
  const double ratio = se_short / se_long;
  CHECK(ratio > 2.0);  // expect ~4
  CHECK(ratio < 8.0);
}

TEST_CASE("chi-square and kolmogorov tails behave") {
  CHECK(chi_square_sf(0.0, 5.0) == doctest::Approx(1.0));
  CHECK(chi_square_sf(100.0, 5.0) < 1e-10);
  CHECK(kolmogorov_sf(0.5) > 0.9);
  CHECK(kolmogorov_sf(2.5) < 1e-4);
}

TEST_CASE("two-sample KS accepts equal distributions and rejects different ones") {
  Rng rng(11);
  std::vector<double> a(4000), b(4000), c(4000);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  for (auto& v : c) v = rng.normal(0.5, 1.0);
  CHECK(ks_two_sample(a, b).p_value > 0.01);
  CHECK(ks_two_sample(a, c).p_value < 1e-6);
}

TEST_CASE("parallel_for covers the index range once") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) hits[i] += 1;
  });
  for (int h : hits) CHECK(h == 1);
}
