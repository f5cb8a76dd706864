#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/gamma.hpp>

#include "atsmc/diagnostics.hpp"
#include "atsmc/lmm.hpp"
#include "atsmc/numeric.hpp"
#include "atsmc/stats.hpp"
#include "support.hpp"

using namespace atsmc;
using namespace atsmc::lmm;

namespace {

// Fully independent collapsed likelihood: the random effect integrated out by
// quadrature, one subject at a time.
double loglik_by_quadrature(const LmmModel& model, const LmmState& st) {
  const auto& d = model.data();
  const double veps = st.eps.cell_var();
  const double vgam = st.gam.cell_var();
  const double mubar_e = st.eps.weighted_mean();
  const double mubar_g = st.gam.weighted_mean();
  double ll = 0.0;
  for (int i = 0; i < d.n; ++i) {
    const double gc = st.gam.mu[st.alloc_gam[i]] - mubar_g;
    double lo = gc - 14.0 * std::sqrt(vgam), hi = gc + 14.0 * std::sqrt(vgam);
    // widen toward the data pull
    for (int t = 0; t < d.periods; ++t) {
      double xb = 0.0;
      for (int k = 0; k < d.p; ++k) xb += d.reg(i, t, k) * st.beta[k];
      const double resid =
          d.response(i, t) - xb - st.eps.mu[st.alloc_eps[i * d.periods + t]] + mubar_e;
      lo = std::min(lo, resid - 14.0 * std::sqrt(veps));
      hi = std::max(hi, resid + 14.0 * std::sqrt(veps));
    }
    const double val = testsupport::integrate_segmented(
        [&](double g) {
          double lp = norm_logpdf(g, gc, vgam);
          for (int t = 0; t < d.periods; ++t) {
            double xb = 0.0;
            for (int k = 0; k < d.p; ++k) xb += d.reg(i, t, k) * st.beta[k];
            lp += norm_logpdf(
                d.response(i, t) - xb -
                    st.eps.mu[st.alloc_eps[i * d.periods + t]] + mubar_e - g,
                0.0, veps);
          }
          return std::exp(lp);
        },
        lo, hi, 64, 1e-13);
    ll += std::log(val);
  }
  return ll;
}

// Independent joint density (up to constants in fixed coordinates).
double lmm_log_joint(const LmmModel& model, const LmmState& st) {
  const auto& pr = model.priors();
  double lp = loglik_by_quadrature(model, st);
  for (const LmmBlock* blk : {&st.eps, &st.gam}) {
    for (double v : blk->sticks) lp += beta_logpdf(v, 1.0, blk->mass);
    for (double m : blk->mu) lp += norm_logpdf(m, 0.0, blk->centring_var());
    lp += gamma_logpdf(blk->mass, pr.mass_shape, pr.mass_rate);
    lp += beta_logpdf(blk->smooth, pr.smooth_be_a, pr.smooth_be_b);
  }
  lp += pr.s2_eps.logpdf(st.eps.sigma2);
  lp += pr.s2_gam.logpdf(st.gam.sigma2);
  for (double b : st.beta) lp += norm_logpdf(b, 0.0, pr.beta_var);
  const auto we = st.eps.weights();
  const auto wg = st.gam.weights();
  for (int s : st.alloc_eps) lp += std::log(we[s]);
  for (int s : st.alloc_gam) lp += std::log(wg[s]);
  return lp;
}

LmmModel toy_model() {
  LmmData d;
  d.n = 2;
  d.periods = 2;
  d.p = 2;
  d.y = {1.1, 0.4, -0.6, 0.9};
  d.X = {1.0, 0.3, 1.0, -0.2, 1.0, 0.6, 1.0, 0.1};
  return LmmModel(d, LmmPriors{}, 2);
}

LmmState toy_state(const LmmModel& model) {
  Rng rng(4);
  LmmState st = model.initial_state(rng);
  st.beta = {0.4, -0.2};
  st.eps.sticks = {0.5, 0.3};
  st.eps.sync_stick_logs();
  st.eps.mu = {-0.3, 0.5};
  st.eps.mass = 0.9;
  st.eps.smooth = 0.25;
  st.eps.sigma2 = 0.8;
  st.gam.sticks = {0.6, 0.4};
  st.gam.sync_stick_logs();
  st.gam.mu = {0.2, -0.4};
  st.gam.mass = 1.2;
  st.gam.smooth = 0.35;
  st.gam.sigma2 = 0.5;
  st.alloc_eps = {0, 1, 1, 0};
  st.alloc_gam = {0, 1};
  return st;
}

}  // namespace

TEST_CASE("collapsed likelihood equals the quadrature integral") {
  const auto model = toy_model();
  const auto st = toy_state(model);
  CHECK(model.collapsed_loglik(st) ==
        doctest::Approx(loglik_by_quadrature(model, st)).epsilon(1e-8));

  // one-subject toy with distinct allocations
  LmmData d;
  d.n = 1;
  d.periods = 3;
  d.p = 1;
  d.y = {0.2, -0.7, 1.4};
  d.X = {1.0, 1.0, 1.0};
  LmmModel one(d, LmmPriors{}, 2);
  Rng rng(9);
  auto st1 = one.initial_state(rng);
  CHECK(one.collapsed_loglik(st1) ==
        doctest::Approx(loglik_by_quadrature(one, st1)).epsilon(1e-8));
}

TEST_CASE("single atom, single cell: likelihood is the convolved normal") {
  LmmData d;
  d.n = 1;
  d.periods = 1;
  d.p = 1;
  d.y = {0.7};
  d.X = {0.5};
  LmmModel model(d, LmmPriors{}, 1);
  Rng rng(11);
  auto st = model.initial_state(rng);
  st.beta = {0.8};
  const double veps = st.eps.cell_var();
  const double vgam = st.gam.cell_var();
  // single atoms center both mixtures exactly at zero
  const double expect = norm_logpdf(0.7 - 0.5 * 0.8, 0.0, veps + vgam);
  CHECK(model.collapsed_loglik(st) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("shift of y and the regression by the same constant cancels") {
  const auto model = toy_model();
  auto st = toy_state(model);
  const double base = model.collapsed_loglik(st);
  LmmData shifted = model.data();
  for (double& v : shifted.y) v += 2.5;
  LmmModel model2(shifted, model.priors(), 2);
  auto st2 = st;
  st2.beta[0] += 2.5;  // X has an intercept column
  CHECK(model2.collapsed_loglik(st2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("mean constraint holds exactly per particle") {
  const auto model = toy_model();
  const auto st = toy_state(model);
  for (const LmmBlock* blk : {&st.eps, &st.gam}) {
    const auto w = blk->weights();
    const double mubar = blk->weighted_mean();
    double acc = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * (blk->mu[j] - mubar);
    CHECK(std::abs(acc) < 1e-14);
  }
}

TEST_CASE("MH targets match the independent joint at five points") {
  const auto model = toy_model();
  auto st = toy_state(model);

  const auto audit = [&](const std::function<double(double)>& impl_target,
                         const std::function<LmmState(double)>& set,
                         const std::vector<double>& pts, double lo, double hi) {
    const auto impl = testsupport::normalized_density(impl_target, pts, lo, hi);
    const auto joint = testsupport::normalized_density(
        [&](double v) { return lmm_log_joint(model, set(v)); }, pts, lo, hi);
    CHECK(testsupport::max_rel_gap(impl, joint) < 1e-6);
  };

  SUBCASE("atom mean, error block") {
    audit([&](double v) { return model.log_target_atom_mean(st, Block::Eps, 0, v); },
          [&](double v) {
            LmmState s = st;
            s.eps.mu[0] = v;
            return s;
          },
          {-1.0, -0.4, 0.0, 0.4, 1.0}, -5.0, 5.0);
  }
  SUBCASE("stick, error block") {
    audit([&](double v) { return model.log_target_stick(st, Block::Eps, 1, v); },
          [&](double v) {
            LmmState s = st;
            s.eps.set_stick(1, v, std::log1p(-v));
            return s;
          },
          {0.1, 0.3, 0.5, 0.7, 0.9}, 1e-7, 1.0 - 1e-7);
  }
  SUBCASE("smoothness, error block") {
    audit([&](double v) { return model.log_target_smooth(st, Block::Eps, v); },
          [&](double v) {
            LmmState s = st;
            s.eps.smooth = v;
            return s;
          },
          {0.05, 0.2, 0.4, 0.6, 0.8}, 1e-6, 1.0 - 1e-6);
  }
  SUBCASE("scale, error block") {
    audit([&](double v) { return model.log_target_sigma2(st, Block::Eps, v); },
          [&](double v) {
            LmmState s = st;
            s.eps.sigma2 = v;
            return s;
          },
          {0.3, 0.6, 1.0, 1.6, 2.5}, 0.05, 12.0);
  }
  SUBCASE("atom mean and stick, random-effect block") {
    audit([&](double v) { return model.log_target_atom_mean(st, Block::Gam, 1, v); },
          [&](double v) {
            LmmState s = st;
            s.gam.mu[1] = v;
            return s;
          },
          {-1.0, -0.4, 0.0, 0.4, 1.0}, -5.0, 5.0);
    audit([&](double v) { return model.log_target_stick(st, Block::Gam, 0, v); },
          [&](double v) {
            LmmState s = st;
            s.gam.set_stick(0, v, std::log1p(-v));
            return s;
          },
          {0.1, 0.3, 0.5, 0.7, 0.9}, 1e-7, 1.0 - 1e-7);
  }
  SUBCASE("mass is conjugate against the joint") {
    const auto [shape, rate] = model.mass_conditional(st, Block::Eps);
    boost::math::gamma_distribution<double> ref(shape, 1.0 / rate);
    const std::vector<double> pts{0.2, 0.6, 1.2, 2.0, 3.5};
    const auto joint = testsupport::normalized_density(
        [&](double v) {
          LmmState s = st;
          s.eps.mass = v;
          return lmm_log_joint(model, s);
        },
        pts, 1e-8, 40.0);
    std::vector<double> exact;
    for (double p : pts) exact.push_back(boost::math::pdf(ref, p));
    CHECK(testsupport::max_rel_gap(joint, exact) < 1e-6);
  }
}

TEST_CASE("allocation conditionals match the normalized joint") {
  const auto model = toy_model();
  auto st = toy_state(model);
  for (int i = 0; i < 2; ++i) {
    for (int t = 0; t < 2; ++t) {
      const auto impl =
          testsupport::normalize_log_masses(model.alloc_eps_log_mass(st, i, t));
      std::vector<double> joint_lm;
      for (int j = 0; j < 2; ++j) {
        LmmState s = st;
        s.alloc_eps[i * 2 + t] = j;
        joint_lm.push_back(lmm_log_joint(model, s));
      }
      const auto ref = testsupport::normalize_log_masses(joint_lm);
      CHECK(testsupport::max_rel_gap(impl, ref) < 1e-6);
    }
    const auto impl_g =
        testsupport::normalize_log_masses(model.alloc_gam_log_mass(st, i));
    std::vector<double> joint_g;
    for (int j = 0; j < 2; ++j) {
      LmmState s = st;
      s.alloc_gam[i] = j;
      joint_g.push_back(lmm_log_joint(model, s));
    }
    const auto ref_g = testsupport::normalize_log_masses(joint_g);
    CHECK(testsupport::max_rel_gap(impl_g, ref_g) < 1e-6);
  }
}

TEST_CASE("beta draw matches the ridge formula with orthonormal X") {
  LmmData d;
  d.n = 2;
  d.periods = 2;
  d.p = 2;
  d.y = {0.9, 0.1, -0.4, 0.7};
  // stacked rows of X are orthonormal columns: X'X = I
  const double r = 0.5;
  d.X = {r, r, r, -r, r, r, -r, r};
  // columns: (r,r,r,-r) and (r,-r,r,r): check orthonormality below
  LmmModel model(d, LmmPriors{}, 1);  // single atoms keep the means at zero
  Rng rng(21);
  auto st = model.initial_state(rng);
  const std::vector<double> beta0{0.3, -0.1};

  // Monte Carlo mean of the beta draw with the state reset every time
  const int reps = 60000;
  std::vector<double> sums(2, 0.0), sq(2, 0.0);
  for (int rep = 0; rep < reps; ++rep) {
    st.beta = beta0;
    model.update_beta(st, rng);
    for (int k = 0; k < 2; ++k) {
      sums[k] += st.beta[k];
      sq[k] += st.beta[k] * st.beta[k];
    }
  }

  // closed form: E[beta] = Sigma* X'(y - E[gamma]) / veps with
  // E[gamma_i] = c_i/d evaluated at beta0 and single atoms centring to zero
  const double veps = st.eps.cell_var();
  const double vgam = st.gam.cell_var();
  const double dd = d.periods / veps + 1.0 / vgam;
  std::vector<double> expected_resid(4);
  for (int i = 0; i < 2; ++i) {
    double sum_d = 0.0;
    for (int t = 0; t < 2; ++t) {
      double xb = 0.0;
      for (int k = 0; k < 2; ++k) xb += d.reg(i, t, k) * beta0[k];
      sum_d += d.response(i, t) - xb;
    }
    const double e_gamma = (sum_d / veps) / dd;
    for (int t = 0; t < 2; ++t)
      expected_resid[i * 2 + t] = d.response(i, t) - e_gamma;
  }
  // verify orthonormality, then apply the ridge formula
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      double dot = 0.0;
      for (int row = 0; row < 4; ++row) dot += d.X[row * 2 + a] * d.X[row * 2 + b];
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0));
    }
  for (int k = 0; k < 2; ++k) {
    double xr = 0.0;
    for (int row = 0; row < 4; ++row) xr += d.X[row * 2 + k] * expected_resid[row];
    const double expect = (xr / veps) / (1.0 / veps + 1e-6);
    const double m = sums[k] / reps;
    const double se = std::sqrt((sq[k] / reps - m * m) / reps);
    CHECK(std::abs(m - expect) < 3.0 * se);
  }
}

TEST_CASE("transition retention probability and reallocation frequency") {
  const auto model = toy_model();

  // plug-in check of r = A / (A + p_new)
  LmmBlock blk;
  blk.sticks = {0.5, 0.25};
  blk.sync_stick_logs();
  blk.mu = {0.0, 0.0};
  const double a = 1.0 - 0.5 * 0.75;
  const auto w = blk.weights();
  CHECK(LmmModel::retention_probability(blk) ==
        doctest::Approx(a / (a + w.back())));

  // a vanishing new weight means no reallocation
  LmmBlock tiny;
  tiny.sticks = {0.5, 1e-14};
  tiny.sync_stick_logs();
  tiny.mu = {0.0, 0.0};
  CHECK(LmmModel::retention_probability(tiny) == doctest::Approx(1.0));

  // Monte Carlo reallocation frequency matches 1 - r
  Rng rng(31);
  const auto base = toy_state(model);
  const int reps = 100000;
  double moved = 0.0, expect = 0.0;
  const int cells = static_cast<int>(base.alloc_eps.size());
  for (int rep = 0; rep < reps; ++rep) {
    LmmState st = base;
    model.extend(st, rng);
    const int newcomer = static_cast<int>(st.eps.sticks.size()) - 1;
    for (int c = 0; c < cells; ++c)
      if (st.alloc_eps[c] == newcomer) moved += 1.0;
    expect += (1.0 - LmmModel::retention_probability(st.eps)) * cells;
  }
  const double se = std::sqrt(expect / reps / cells) * std::sqrt(1.0 / reps) *
                    cells;  // coarse Poisson-scale bound
  CHECK(std::abs(moved / reps - expect / reps) <
        3.0 * std::max(se, 0.3 / std::sqrt(static_cast<double>(reps))));
}

TEST_CASE("extension grows both blocks and keeps allocations in range") {
  const auto model = toy_model();
  Rng rng(41);
  auto st = toy_state(model);
  const std::size_t alloc_count = st.alloc_eps.size();
  model.extend(st, rng);
  CHECK(model.truncation_size(st) == 3);
  CHECK(st.gam.sticks.size() == 3);
  CHECK(st.eps.mu_scales.size() == 3);
  CHECK(st.alloc_eps.size() == alloc_count);
  for (int s : st.alloc_eps) {
    CHECK(s >= 0);
    CHECK(s < 3);
  }
  const double ll = model.collapsed_loglik(st);
  CHECK(std::isfinite(ll));
}

TEST_CASE("schoolgirl design matrix layout") {
  const std::vector<int> subject{2, 2, 1, 1};
  const std::vector<double> age{6.0, 7.0, 6.0, 7.0};
  const std::vector<double> height{110.0, 116.0, 102.0, 109.0};
  const std::vector<int> group{3, 3, 1, 1};
  const LmmData d = schoolgirl_design(subject, age, height, group);
  CHECK(d.n == 2);
  CHECK(d.periods == 2);
  CHECK(d.p == 4);
  // subject 1 first (sorted), group 1 dummy set, age in the last column
  CHECK(d.response(0, 0) == doctest::Approx(102.0));
  CHECK(d.reg(0, 0, 0) == doctest::Approx(1.0));
  CHECK(d.reg(0, 0, 2) == doctest::Approx(0.0));
  CHECK(d.reg(0, 0, 3) == doctest::Approx(6.0));
  CHECK(d.reg(1, 1, 2) == doctest::Approx(1.0));
  CHECK_THROWS(schoolgirl_design({1, 1, 2}, {6, 7, 6}, {1, 2, 3}, {1, 1, 1}));
}

TEST_CASE("joint-distribution (Geweke) test on a 2x2 panel") {
  LmmPriors priors;
  priors.s2_eps.upper = 25.0;
  priors.s2_gam.upper = 25.0;
  LmmData d;
  d.n = 2;
  d.periods = 2;
  d.p = 1;
  d.y = {0.0, 0.0, 0.0, 0.0};
  d.X = {1.0, 0.5, -0.5, 1.0};
  diag::LmmGewekeChain chain(LmmModel(d, priors, 2));
  Rng rng(51);
  const auto result = diag::geweke_test(chain, 60000, 12, 5000, rng);
  for (std::size_t k = 0; k < result.names.size(); ++k) {
    INFO(result.names[k], " p=", result.ks[k].p_value);
    CHECK(result.ks[k].p_value > 0.01);
  }
}
