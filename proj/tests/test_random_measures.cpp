#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include <boost/math/special_functions/expint.hpp>

#include "atsmc/random_measures.hpp"
#include "atsmc/rng.hpp"
#include "atsmc/stats.hpp"
#include "support.hpp"

using namespace atsmc;
using namespace atsmc::measures;

namespace {
double e1(double x) { return boost::math::expint(1, x); }
}

TEST_CASE("sb_weights forced examples") {
  CHECK(sb_weights(std::vector<double>{1.0}) == std::vector<double>{1.0});
  const auto p2 = sb_weights(std::vector<double>{0.3, 1.0});
  CHECK(p2[0] == doctest::Approx(0.3));
  CHECK(p2[1] == doctest::Approx(0.7));
  const auto p3 = sb_weights(std::vector<double>{0.5, 0.5, 1.0});
  CHECK(p3[0] == doctest::Approx(0.5));
  CHECK(p3[1] == doctest::Approx(0.25));
  CHECK(p3[2] == doctest::Approx(0.25));
  CHECK_THROWS_AS(sb_weights(std::vector<double>{0.3, 0.5}), std::domain_error);
  CHECK_THROWS_AS(sb_weights(std::vector<double>{1.2, 1.0}), std::domain_error);
}

TEST_CASE("rsb_weights examples and renormalization oracle") {
  const auto p = rsb_weights(std::vector<double>{0.5, 0.5});
  CHECK(p[0] == doctest::Approx(2.0 / 3.0));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0));
  const auto single = rsb_weights(std::vector<double>{0.9});
  CHECK(single[0] == doctest::Approx(1.0));

  // independent arithmetic: raw sticks renormalized directly
  const std::vector<double> v{0.2, 0.2, 0.2};
  std::vector<double> raw{0.2, 0.2 * 0.8, 0.2 * 0.8 * 0.8};
  const double total = raw[0] + raw[1] + raw[2];
  const auto q = rsb_weights(v);
  for (int j = 0; j < 3; ++j) CHECK(q[j] == doctest::Approx(raw[j] / total).epsilon(1e-14));

  CHECK_THROWS_AS(rsb_weights(std::vector<double>{0.0, 0.0}), std::domain_error);
}

TEST_CASE("stick weights sum to one (property)") {
  Rng rng(42);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform_index(8));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform_pos();
    const auto r = rsb_weights(v);
    CHECK(std::abs(std::accumulate(r.begin(), r.end(), 0.0) - 1.0) < 1e-12);
    v.back() = 1.0;
    const auto s = sb_weights(v);
    CHECK(std::abs(std::accumulate(s.begin(), s.end(), 0.0) - 1.0) < 1e-12);
  }
}

TEST_CASE("rsb weights are stochastically ordered under Be(1,M)") {
  Rng rng(31);
  const int n = 100000, atoms = 4;
  std::vector<double> mean(atoms, 0.0), m2(atoms, 0.0);
  for (int rep = 0; rep < n; ++rep) {
    std::vector<double> v(atoms);
    for (auto& x : v) x = rng.beta(1.0, 1.0);
    const auto p = rsb_weights(v);
    for (int j = 0; j < atoms; ++j) {
      mean[j] += p[j];
      m2[j] += p[j] * p[j];
    }
  }
  for (int j = 0; j < atoms; ++j) {
    mean[j] /= n;
    m2[j] = std::sqrt((m2[j] / n - mean[j] * mean[j]) / n);  // s.e. of the mean
  }
  for (int j = 0; j + 1 < atoms; ++j)
    CHECK(mean[j] - mean[j + 1] > 3.0 * std::hypot(m2[j], m2[j + 1]));
}

TEST_CASE("gamma-process tail mass matches the exponential integral") {
  const GammaProcessLevy unit(1.0);
  CHECK(std::abs(unit.tail_mass(1.0) - 0.219384) < 1e-6);
  CHECK(std::abs(unit.tail_mass(1.0) - e1(1.0)) < 1e-9);
  CHECK(std::abs(unit.tail_mass(0.1) - e1(0.1)) < 1e-9);
  const GammaProcessLevy two(2.0);
  CHECK(std::abs(two.tail_mass(0.7) - 2.0 * e1(0.7)) < 1e-9);
}

TEST_CASE("fk inversion hits the quadrature oracle") {
  const GammaProcessLevy unit(1.0);
  const auto j = fk_jumps(unit, std::vector<double>{0.21938393439552026});
  CHECK(std::abs(j[0] - 1.0) < 1e-8);
}

TEST_CASE("fk jumps strictly decreasing; mass rescales arrivals") {
  const GammaProcessLevy unit(1.0);
  Rng rng(5);
  std::vector<double> arrivals(6);
  double t = 0.0;
  for (auto& a : arrivals) {
    t += rng.exponential(1.0);
    a = t;
  }
  const auto jumps = fk_jumps(unit, arrivals);
  for (std::size_t i = 1; i < jumps.size(); ++i) CHECK(jumps[i] < jumps[i - 1]);

  const GammaProcessLevy two(2.0);
  std::vector<double> halved(arrivals);
  for (auto& a : halved) a /= 2.0;
  const auto j2 = fk_jumps(two, arrivals);
  const auto j1 = fk_jumps(unit, halved);
  for (std::size_t i = 0; i < jumps.size(); ++i)
    CHECK(j2[i] == doctest::Approx(j1[i]).epsilon(1e-8));
}

TEST_CASE("fk_extend: decreasing, Exp(1) tail-mass increments, exact conditional") {
  const GammaProcessLevy unit(1.0);
  Rng rng(9);
  const int n = 20000;
  double sum_inc = 0.0, sum_inc2 = 0.0;
  std::vector<double> draws;
  draws.reserve(n);
  const double z1 = e1(1.0);
  for (int i = 0; i < n; ++i) {
    const double next = fk_extend(unit, 1.0, rng);
    CHECK(next < 1.0);
    const double inc = e1(next) - z1;
    sum_inc += inc;
    sum_inc2 += inc * inc;
    draws.push_back(next);
  }
  const double mean_inc = sum_inc / n;
  const double sd = std::sqrt((sum_inc2 / n - mean_inc * mean_inc) / n);
  CHECK(std::abs(mean_inc - 1.0) < 3.0 * sd);

  // KS against the analytic conditional CDF P(J <= x) = exp(-(zeta(x)-zeta(1)))
  const auto cdf = [&](double x) { return std::exp(-(e1(x) - z1)); };
  const auto ks = testsupport::ks_one_sample(draws, cdf);
  CHECK(ks.p_value > 0.01);

  // rejection-sampling oracle for the same conditional: the target density
  // eta(x) exp(-(zeta(x)-zeta(1))) is bounded on (0,1)
  std::vector<double> rejection;
  rejection.reserve(n);
  double bound = 0.0;
  for (int i = 1; i <= 400; ++i) {
    const double x = i / 401.0;
    bound = std::max(bound, unit.density(x) * std::exp(-(e1(x) - z1)));
  }
  bound *= 1.5;
  Rng rng2(10);
  while (rejection.size() < 20000) {
    const double x = rng2.uniform_pos();
    const double f = unit.density(x) * std::exp(-(e1(x) - z1));
    if (rng2.uniform() * bound < f) rejection.push_back(x);
  }
  CHECK(ks_two_sample(draws, rejection).p_value > 0.01);
}

TEST_CASE("cpp_sample: support, count law, jump law") {
  const GammaProcessLevy unit(1.0);
  Rng rng(13);
  const double level = 0.1;
  const double expect = e1(level);  // 1.8229...
  CHECK(std::abs(expect - 1.8229) < 1e-4);

  const int n = 20000;
  long total = 0;
  std::vector<double> counts;
  std::vector<double> jumps;
  for (int i = 0; i < n; ++i) {
    const auto draw = cpp_sample(unit, level, rng);
    total += static_cast<long>(draw.size());
    counts.push_back(static_cast<double>(draw.size()));
    for (double j : draw) {
      CHECK(j > level);
      if (jumps.size() < 20000) jumps.push_back(j);
    }
  }
  const double mean_count = static_cast<double>(total) / n;
  const double se = std::sqrt(expect / n);
  CHECK(std::abs(mean_count - expect) < 3.0 * se);

  // chi-square against Poisson(zeta(L))
  const int max_bin = 9;
  std::vector<double> observed(max_bin + 1, 0.0), expected(max_bin + 1, 0.0);
  for (double c : counts) observed[std::min<int>(static_cast<int>(c), max_bin)] += 1.0;
  double p = std::exp(-expect);
  double tail = 1.0;
  for (int k = 0; k < max_bin; ++k) {
    expected[k] = n * p;
    tail -= p;
    p *= expect / (k + 1);
  }
  expected[max_bin] = n * tail;
  CHECK(chisq_gof_pvalue(observed, expected) > 0.01);

  // jump distribution vs the analytic CDF 1 - zeta(x)/zeta(L)
  const auto cdf = [&](double x) { return 1.0 - e1(x) / expect; };
  CHECK(testsupport::ks_one_sample(jumps, cdf).p_value > 0.01);
}

TEST_CASE("cpp level sequences") {
  const GammaProcessLevy unit(1.0);
  CHECK(cpp_level_sequence(1.0, LevelScheme::Geometric, std::log(2.0), unit, 3) ==
        doctest::Approx(0.25).epsilon(1e-12));
  const double l2 = cpp_level_sequence(0.1, LevelScheme::OneAtom, 0.0, unit, 2);
  CHECK(std::abs(unit.tail_mass(l2) - (e1(0.1) + 1.0)) < 1e-8);
  double prev = 0.1;
  for (int k = 2; k <= 5; ++k) {
    const double lk = cpp_level_sequence(0.1, LevelScheme::OneAtom, 0.0, unit, k);
    CHECK(lk < prev);
    prev = lk;
  }
}
