#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "atsmc/adaptive_mh.hpp"
#include "atsmc/numeric.hpp"
#include "atsmc/stats.hpp"

using namespace atsmc;
using namespace atsmc::amh;

TEST_CASE("adapt_step plug-in values") {
  AdaptiveScale s;
  SUBCASE("at the target rate the scale is unchanged") {
    s.log_var = 0.7;
    adapt_step(s, 0.3);
    CHECK(s.log_var == doctest::Approx(0.7));
    CHECK(s.iteration == 2);
  }
  SUBCASE("unit step at i=1") {
    adapt_step(s, 0.8);
    CHECK(s.log_var == doctest::Approx(0.5));  // 1^-0.55 * (0.8 - 0.3)
  }
  SUBCASE("clamp holds at the bound") {
    s.log_var = s.bound;
    adapt_step(s, 1.0);
    CHECK(s.log_var == doctest::Approx(s.bound));
    s.log_var = -s.bound;
    adapt_step(s, 0.0);
    CHECK(s.log_var == doctest::Approx(-s.bound));
  }
  CHECK_THROWS_AS(adapt_step(s, 1.5), std::domain_error);
}

TEST_CASE("transforms and jacobians invert") {
  for (Transform t : {Transform::Identity, Transform::Log, Transform::Logit,
                      Transform::FisherRho}) {
    const double x = t == Transform::FisherRho ? -0.4
                     : t == Transform::Logit   ? 0.3
                                               : 0.8;
    CHECK(apply_inverse(t, apply_transform(t, x)) == doctest::Approx(x));
    // numerical check of log|dx/dz|
    const double z = apply_transform(t, x);
    const double h = 1e-6;
    const double num =
        (apply_inverse(t, z + h) - apply_inverse(t, z - h)) / (2.0 * h);
    CHECK(log_jacobian(t, x) == doctest::Approx(std::log(num)).epsilon(1e-5));
  }
}

TEST_CASE("vanishing proposal variance accepts and stays put") {
  AdaptiveScale s;
  s.log_var = -s.bound;  // sd = e^{-25}, numerically a zero move
  Rng rng(3);
  const auto res = mh_step(
      1.25, [](double x) { return -0.5 * x * x; }, Transform::Identity, s, rng);
  CHECK(res.accept_prob == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(res.value == doctest::Approx(1.25).epsilon(1e-9));
}

TEST_CASE("acceptance rate converges to the 0.3 target on a standard normal") {
  AdaptiveScale s;
  Rng rng(17);
  double x = 0.0;
  double accepted = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto res = mh_step(
        x, [](double v) { return -0.5 * v * v; }, Transform::Identity, s, rng);
    x = res.value;
    accepted += res.accept_prob;
  }
  CHECK(std::abs(accepted / n - 0.3) < 0.03);
}

TEST_CASE("logit transform samples Be(2,2) with the correct mean") {
  AdaptiveScale s;
  Rng rng(23);
  double x = 0.5;
  double sum = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const auto res = mh_step(
        x, [](double v) {
          if (!(v > 0.0) || !(v < 1.0))
            return -std::numeric_limits<double>::infinity();
          return std::log(v) + std::log1p(-v);  // Be(2,2) kernel
        },
        Transform::Logit, s, rng);
    x = res.value;
    sum += x;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("frozen-adaptation chain preserves a discretized normal target") {
  // run with diminishing adaptation first, then freeze and test stationarity
  AdaptiveScale s;
  Rng rng(29);
  double x = 0.0;
  for (int i = 0; i < 20000; ++i)
    x = mh_step(x, [](double v) { return -0.5 * v * v; }, Transform::Identity,
                s, rng)
            .value;
  const double frozen = s.log_var;
  const int thin = 50;  // decorrelate so the iid chi-square applies
  const int kept = 6000;
  std::vector<double> edges{-1.5, -0.5, 0.5, 1.5};
  std::vector<double> observed(5, 0.0);
  for (int i = 0; i < kept; ++i) {
    for (int t = 0; t < thin; ++t) {
      s.log_var = frozen;  // freeze the proposal scale
      x = mh_step(x, [](double v) { return -0.5 * v * v; }, Transform::Identity,
                  s, rng)
              .value;
    }
    std::size_t bin = 0;
    while (bin < edges.size() && x > edges[bin]) ++bin;
    observed[bin] += 1.0;
  }
  const auto phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  std::vector<double> expected;
  double prev = 0.0;
  for (double e : edges) {
    expected.push_back((phi(e) - prev) * kept);
    prev = phi(e);
  }
  expected.push_back((1.0 - prev) * kept);
  CHECK(chisq_gof_pvalue(observed, expected, 0, 5.0) > 0.01);
}
