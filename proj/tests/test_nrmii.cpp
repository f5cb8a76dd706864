#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "atsmc/nrmii.hpp"
#include "atsmc/numeric.hpp"
#include "atsmc/stats.hpp"
#include "support.hpp"

using namespace atsmc;
using namespace atsmc::nrmii;

namespace {

double e1(double x) { return boost::math::expint(1, x); }

CppMixtureModel toy_model() {
  dpm::NormalMixtureHyper hyper{0.0, 4.0, 3.0, 0.6};
  return CppMixtureModel({-0.9, -0.2, 0.7, 1.1}, hyper, 1.0, 5);
}

}  // namespace

TEST_CASE("level sequence ties the initial level to the expected atom count") {
  const auto model = toy_model();
  CHECK(std::abs(model.levy().tail_mass(model.level_at(1)) - 5.0) < 1e-7);
  CHECK(std::abs(model.levy().tail_mass(model.level_at(3)) - 7.0) < 1e-7);
  CHECK(model.level_at(2) < model.level_at(1));
}

TEST_CASE("occupied-jump conditional: plug-in and quadrature audit") {
  const auto model = toy_model();
  Rng rng(3);
  auto st = model.initial_state(rng);
  // m = 1, v = 0: Gamma(1, 1), i.e. Exp(1)
  st.latent_v = 0.0;
  auto [s0, r0] = model.occupied_jump_conditional(st, 1);
  CHECK(s0 == doctest::Approx(1.0));
  CHECK(r0 == doctest::Approx(1.0));
  // m = 3, v = 1: Gamma(3, 2) truncated to (level, inf); compare against the
  // normalized eta(J) J^m e^{-vJ} target
  st.latent_v = 1.0;
  const auto [shape, rate] = model.occupied_jump_conditional(st, 3);
  CHECK(shape == doctest::Approx(3.0));
  CHECK(rate == doctest::Approx(2.0));
  const double level = st.level;
  const std::vector<double> pts{level + 0.1, 0.8, 1.5, 2.5, 4.0};
  const auto numeric = testsupport::normalized_density(
      [&](double x) {
        if (!(x > level)) return -std::numeric_limits<double>::infinity();
        return std::log(1.0 / x) - x + 3.0 * std::log(x) - 1.0 * x;
      },
      pts, level + 1e-9, 40.0);
  boost::math::gamma_distribution<double> ref(shape, 1.0 / rate);
  const double tail = 1.0 - boost::math::gamma_p(shape, rate * level);
  std::vector<double> exact;
  for (double p : pts) exact.push_back(boost::math::pdf(ref, p) / tail);
  CHECK(testsupport::max_rel_gap(numeric, exact) < 1e-6);
}

TEST_CASE("truncated gamma sampler stays above the bound with the right law") {
  Rng rng(5);
  const double shape = 3.0, rate = 2.0, lower = 0.8;
  std::vector<double> draws(20000);
  for (auto& d : draws) {
    d = CppMixtureModel::truncated_gamma(shape, rate, lower, rng);
    CHECK(d > lower);
  }
  const double p_low = boost::math::gamma_p(shape, rate * lower);
  const auto cdf = [&](double x) {
    return (boost::math::gamma_p(shape, rate * x) - p_low) / (1.0 - p_low);
  };
  CHECK(testsupport::ks_one_sample(draws, cdf).p_value > 0.01);
}

TEST_CASE("unoccupied refresh: expected count matches the damped intensity") {
  const auto model = toy_model();
  Rng rng(7);
  const double level = 0.1, v = 1.0;
  // integral of x^{-1} e^{-(1+v)x} over (level, inf) = E1(level * (1+v))
  const double expect = e1(level * (1.0 + v));
  const int reps = 10000;
  long total = 0;
  for (int i = 0; i < reps; ++i) {
    const auto draws = model.thinned_poisson_jumps(
        level, std::numeric_limits<double>::infinity(), v, rng);
    total += static_cast<long>(draws.size());
    for (double x : draws) CHECK(x > level);
  }
  const double m = static_cast<double>(total) / reps;
  CHECK(std::abs(m - expect) < 3.0 * std::sqrt(expect / reps));
}

TEST_CASE("v = 0 band draw reduces to the plain compound-Poisson law") {
  const auto model = toy_model();
  Rng rng(9);
  const double hi = 0.5, lo = 0.2;
  const double expect = e1(lo) - e1(hi);
  const int reps = 10000;
  long total = 0;
  for (int i = 0; i < reps; ++i) {
    const auto draws = model.thinned_poisson_jumps(lo, hi, 0.0, rng);
    total += static_cast<long>(draws.size());
    for (double x : draws) {
      CHECK(x > lo);
      CHECK(x < hi);
    }
  }
  const double m = static_cast<double>(total) / reps;
  CHECK(std::abs(m - expect) < 3.0 * std::sqrt(expect / reps));
  CHECK(model.thinned_poisson_jumps(0.3, 0.3, 0.0, rng).empty());
}

TEST_CASE("allocation conditional: forced, proportional, and audited") {
  const auto model = toy_model();
  Rng rng(11);
  auto st = model.initial_state(rng);
  st.jumps = {1.4, 0.7};
  st.mu = {0.0, 0.0};
  st.var = {1.0, 1.0};
  st.alloc = {0, 0, 1, 1};
  const auto probs = testsupport::normalize_log_masses(model.alloc_log_mass(st, 0));
  CHECK(probs[0] == doctest::Approx(1.4 / 2.1).epsilon(1e-12));

  st.mu = {-0.5, 0.9};
  st.var = {0.8, 0.3};
  const auto impl = testsupport::normalize_log_masses(model.alloc_log_mass(st, 2));
  std::vector<double> direct(2);
  for (int j = 0; j < 2; ++j)
    direct[j] = st.jumps[j] * norm_pdf(model.data()[2], st.mu[j], st.var[j]);
  const double total = direct[0] + direct[1];
  for (int j = 0; j < 2; ++j)
    CHECK(impl[j] == doctest::Approx(direct[j] / total).epsilon(1e-10));
}

TEST_CASE("latent v conditional: Gamma(n, sum J) with moments and audit") {
  const auto model = toy_model();
  Rng rng(13);
  auto st = model.initial_state(rng);
  st.jumps = {1.0, 0.8, 0.7};
  st.alloc = {0, 1, 2, 0};
  const auto [shape, rate] = model.v_conditional(st);
  CHECK(shape == doctest::Approx(4.0));
  CHECK(rate == doctest::Approx(2.5));

  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    model.update_v(st, rng);
    sum += st.latent_v;
    sq += st.latent_v * st.latent_v;
  }
  const double m = sum / n;
  const double se = std::sqrt((sq / n - m * m) / n);
  CHECK(std::abs(m - shape / rate) < 3.0 * se);

  // n = 1 reduces to Exp(sum J)
  dpm::NormalMixtureHyper hyper{0.0, 4.0, 3.0, 0.6};
  CppMixtureModel single({0.4}, hyper, 1.0, 3);
  auto st1 = single.initial_state(rng);
  const auto [s1, r1] = single.v_conditional(st1);
  CHECK(s1 == doctest::Approx(1.0));
  double total = 0.0;
  for (double j : st1.jumps) total += j;
  CHECK(r1 == doctest::Approx(total));
}

TEST_CASE("augmented prior integrates back to the jump-share allocation law") {
  // K = 2 jumps, n = 2 observations: integrate v out of
  // v^{n-1} prod J_{s_i} exp(-v sum J) / Gamma(n) and compare with the
  // closed-form marginal prod J_{s_i} / (sum J)^n; also check it normalizes.
  const double j1 = 1.3, j2 = 0.4;
  const double total = j1 + j2;
  double normalization = 0.0;
  for (int s1 = 0; s1 < 2; ++s1)
    for (int s2 = 0; s2 < 2; ++s2) {
      const double js1 = s1 == 0 ? j1 : j2;
      const double js2 = s2 == 0 ? j1 : j2;
      const double marginal = integrate(
          [&](double v) { return v * js1 * js2 * std::exp(-v * total); }, 0.0,
          40.0, 1e-12);
      const double closed = js1 * js2 / (total * total);
      CHECK(marginal == doctest::Approx(closed).epsilon(1e-9));
      normalization += closed;
    }
  CHECK(normalization == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sweep keeps jumps above the level and allocations occupied") {
  const auto model = toy_model();
  Rng rng(17);
  auto st = model.initial_state(rng);
  for (int it = 0; it < 200; ++it) {
    // after the jump/atom refresh, occupied jumps come first and every
    // allocation points below the unoccupied block
    model.update_jumps_and_atoms(st, rng);
    REQUIRE(!st.jumps.empty());
    for (double j : st.jumps) CHECK(j > st.level);
    std::vector<long> counts(st.jumps.size(), 0);
    for (int s : st.alloc) {
      REQUIRE(s >= 0);
      REQUIRE(s < static_cast<int>(st.jumps.size()));
      counts[s] += 1;
    }
    std::size_t first_empty = 0;
    while (first_empty < counts.size() && counts[first_empty] > 0) ++first_empty;
    for (std::size_t j = first_empty; j < counts.size(); ++j) CHECK(counts[j] == 0);
    // complete the sweep; the allocation and v draws keep everything in range
    model.update_alloc(st, rng);
    model.update_v(st, rng);
    CHECK(st.latent_v > 0.0);
  }
}

TEST_CASE("level transition appends only band jumps and updates the level") {
  const auto model = toy_model();
  Rng rng(19);
  auto st = model.initial_state(rng);
  const double old_level = st.level;
  const std::size_t old_count = st.jumps.size();
  const double ll_before = model.loglik(st);
  CHECK(std::isfinite(ll_before));
  model.extend(st, rng);
  CHECK(st.level_index == 2);
  CHECK(st.level < old_level);
  for (std::size_t j = old_count; j < st.jumps.size(); ++j) {
    CHECK(st.jumps[j] > st.level);
    CHECK(st.jumps[j] < old_level);
  }
  auto fresh = st;
  fresh.cache_valid = false;
  CHECK(model.loglik(st) == doctest::Approx(model.loglik(fresh)).epsilon(1e-12));
}

TEST_CASE("expected band count under damping matches quadrature over the band") {
  const auto model = toy_model();
  Rng rng(23);
  const double hi = 0.4, lo = 0.15, v = 0.7;
  const double expect = integrate(
      [&](double x) { return std::exp(-v * x) * std::exp(-x) / x; }, lo, hi, 1e-12);
  const int reps = 10000;
  long total = 0;
  for (int i = 0; i < reps; ++i)
    total += static_cast<long>(model.thinned_poisson_jumps(lo, hi, v, rng).size());
  const double m = static_cast<double>(total) / reps;
  CHECK(std::abs(m - expect) < 3.0 * std::sqrt(expect / reps));
}
