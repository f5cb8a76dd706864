#include "atsmc/ts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "atsmc/dpm.hpp"
#include "atsmc/numeric.hpp"
#include "atsmc/random_measures.hpp"
#include "atsmc/stats.hpp"

namespace atsmc::ts {

namespace {

double clamp_unit(double v) { return std::clamp(v, 1e-12, 1.0 - 1e-12); }
double clamp_rho(double r) { return std::clamp(r, -1.0 + 1e-12, 1.0 - 1e-12); }

double log_stick_value(double value, double log1m) {
  return log1m < -1e-9 ? atsmc::log1m_exp(log1m) : std::log(value);
}

/// log of the bivariate normal density with common mean m, common variance v
/// and correlation rho, evaluated at (x, y).
double bvn_logpdf(double x, double y, double m, double v, double rho) {
  const double xd = x - m, yd = y - m;
  const double omr2 = 1.0 - rho * rho;
  return -kLogTwoPi - std::log(v) - 0.5 * std::log(omr2) -
         (xd * xd + yd * yd - 2.0 * rho * xd * yd) / (2.0 * v * omr2);
}

}  // namespace

std::vector<double> TsState::stick_weights() const {
  std::vector<double> log_raw(sticks.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < sticks.size(); ++j) {
    log_raw[j] = log_stick_value(sticks[j], log1m_sticks[j]) + acc;
    acc += log1m_sticks[j];
  }
  const double lse = log_sum_exp(log_raw);
  std::vector<double> w(sticks.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = std::exp(log_raw[j] - lse);
  return w;
}

double TsState::sum_log1m() const {
  double acc = 0.0;
  for (double l : log1m_sticks) acc += l;
  return acc;
}

void TsState::sync_stick_logs() {
  log1m_sticks.resize(sticks.size());
  for (std::size_t j = 0; j < sticks.size(); ++j)
    log1m_sticks[j] = std::log1p(-sticks[j]);
}

void TsData::validate() const {
  if (y.size() < 3) throw std::invalid_argument("TsData: need at least 3 observations");
}

void standardize(std::vector<double>& y) {
  const double m = mean(y);
  const double sd = std::sqrt(variance(y));
  for (double& v : y) v = (v - m) / sd;
}

TsModel::TsModel(TsData data, TsPriors priors, int initial_atoms)
    : data_(std::move(data)), priors_(priors), initial_atoms_(initial_atoms) {
  data_.validate();
  if (initial_atoms_ < 1) throw std::invalid_argument("TsModel: initial atoms >= 1");
}

TsModel::State TsModel::initial_state(Rng& rng) const {
  State state;
  const int T = static_cast<int>(data_.y.size());
  state.trend = data_.y;
  state.mass_eps = rng.gamma(priors_.mass_shape, priors_.mass_rate);
  state.a_eps = clamp_unit(rng.beta(priors_.smooth_be_a, priors_.smooth_be_b));
  state.s2_eps = priors_.s2_eps.upper ? priors_.s2_eps.sample(rng) : 1.0;
  for (int j = 0; j < initial_atoms_; ++j) {
    const auto [v, l] = rng.beta_with_log1m(1.0, state.mass_eps);
    state.push_stick(v, l);
    state.mu_eps.push_back(rng.normal(0.0, std::sqrt(state.centring_var())));
    state.rho.push_back(clamp_rho(rng.uniform(-1.0, 1.0)));
  }
  state.mass_trend = rng.gamma(priors_.mass_shape, priors_.mass_rate);
  state.a_trend = clamp_unit(rng.beta(priors_.smooth_be_a, priors_.smooth_be_b));
  state.s2_trend = priors_.s2_trend.upper ? priors_.s2_trend.sample(rng) : 1.0;
  state.alloc_trend.assign(T - 1, 0);
  state.mu_trend.assign(1, 0.0);
  state.mu_scales.assign(initial_atoms_, amh::AdaptiveScale{});
  state.stick_scales.assign(initial_atoms_, amh::AdaptiveScale{});
  state.rho_scales.assign(initial_atoms_, amh::AdaptiveScale{});
  state.trend_scales.assign(T, amh::AdaptiveScale{});
  return state;
}

double TsModel::collapsed_loglik(const State& state) const {
  const int T = static_cast<int>(data_.y.size());
  const double v = state.cell_var();
  if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
  const std::vector<double> w = state.stick_weights();
  const std::size_t nj = w.size();
  double mubar = 0.0;
  for (std::size_t j = 0; j < nj; ++j) mubar += w[j] * state.mu_eps[j];

  std::vector<double> logw(nj), m(nj);
  for (std::size_t j = 0; j < nj; ++j) {
    logw[j] = std::log(w[j]);
    m[j] = state.mu_eps[j] - mubar;
  }
  auto eps = [&](int t) { return data_.y[t] - state.trend[t]; };

  double ll = 0.0;
  {
    double lm = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nj; ++j)
      lm = log_add_exp(lm, logw[j] + norm_logpdf(eps(0), m[j], v));
    ll += lm;
  }
  for (int t = 1; t < T; ++t) {
    double num = -std::numeric_limits<double>::infinity();
    double den = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nj; ++j) {
      num = log_add_exp(num, logw[j] + bvn_logpdf(eps(t - 1), eps(t), m[j], v,
                                                  state.rho[j]));
      den = log_add_exp(den, logw[j] + norm_logpdf(eps(t - 1), m[j], v));
    }
    // both underflow when the path is impossibly far out; the likelihood is 0
    if (den == -std::numeric_limits<double>::infinity())
      return -std::numeric_limits<double>::infinity();
    ll += num - den;
  }
  return ll;
}

double TsModel::transition_density(const State& state, double eps_prev,
                                   double eps_t) const {
  const double v = state.cell_var();
  const std::vector<double> w = state.stick_weights();
  double mubar = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) mubar += w[j] * state.mu_eps[j];
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double m = state.mu_eps[j] - mubar;
    num += w[j] * std::exp(bvn_logpdf(eps_prev, eps_t, m, v, state.rho[j]));
    den += w[j] * norm_pdf(eps_prev, m, v);
  }
  return num / den;
}

double TsModel::stationary_density(const State& state, double eps) const {
  const double v = state.cell_var();
  const std::vector<double> w = state.stick_weights();
  double mubar = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) mubar += w[j] * state.mu_eps[j];
  double d = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j)
    d += w[j] * norm_pdf(eps, state.mu_eps[j] - mubar, v);
  return d;
}

double TsModel::increment_density(const State& state, double nu) const {
  const int periods = static_cast<int>(data_.y.size()) - 1;
  std::vector<long> counts(state.mu_trend.size(), 0);
  for (int s : state.alloc_trend) counts[s] += 1;
  const double total = periods + state.mass_trend;
  double d = state.mass_trend / total * norm_pdf(nu, 0.0, state.s2_trend);
  for (std::size_t j = 0; j < state.mu_trend.size(); ++j)
    d += counts[j] / total *
         norm_pdf(nu, state.mu_trend[j], state.a_trend * state.s2_trend);
  return d;
}

double TsModel::log_target_atom_mean(State& state, int j, double value) const {
  const double old = state.mu_eps[j];
  state.mu_eps[j] = value;
  const double lt =
      collapsed_loglik(state) + norm_logpdf(value, 0.0, state.centring_var());
  state.mu_eps[j] = old;
  return lt;
}

double TsModel::log_target_stick(State& state, int j, double value) const {
  if (!(value > 0.0) || !(value < 1.0))
    return -std::numeric_limits<double>::infinity();
  return stick_target_pair(state, j, value, std::log1p(-value));
}

double TsModel::stick_target_pair(State& state, int j, double value,
                                  double log1m) const {
  const double old_v = state.sticks[j];
  const double old_l = state.log1m_sticks[j];
  state.set_stick(j, value, log1m);
  const double lt = collapsed_loglik(state) + (state.mass_eps - 1.0) * log1m;
  state.set_stick(j, old_v, old_l);
  return lt;
}

double TsModel::log_target_rho(State& state, int j, double value) const {
  if (!(value > -1.0) || !(value < 1.0))
    return -std::numeric_limits<double>::infinity();
  const double old = state.rho[j];
  state.rho[j] = value;
  const double lt = collapsed_loglik(state);  // rho prior uniform on (-1,1)
  state.rho[j] = old;
  return lt;
}

double TsModel::log_target_smooth_eps(State& state, double value) const {
  if (!(value > 0.0) || !(value < 1.0))
    return -std::numeric_limits<double>::infinity();
  const double old = state.a_eps;
  state.a_eps = value;
  double lt = collapsed_loglik(state) +
              beta_logpdf(value, priors_.smooth_be_a, priors_.smooth_be_b);
  for (double m : state.mu_eps) lt += norm_logpdf(m, 0.0, state.centring_var());
  state.a_eps = old;
  return lt;
}

double TsModel::log_target_s2_eps(State& state, double value) const {
  if (!(value > 0.0)) return -std::numeric_limits<double>::infinity();
  const double old = state.s2_eps;
  state.s2_eps = value;
  double lt = collapsed_loglik(state) + priors_.s2_eps.logpdf(value);
  for (double m : state.mu_eps) lt += norm_logpdf(m, 0.0, state.centring_var());
  state.s2_eps = old;
  return lt;
}

double TsModel::log_target_trend_point(State& state, int t, double value) const {
  const int T = static_cast<int>(data_.y.size());
  const double v = state.cell_var();
  const std::vector<double> w = state.stick_weights();
  double mubar = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) mubar += w[j] * state.mu_eps[j];

  const double old = state.trend[t];
  state.trend[t] = value;
  auto eps = [&](int s) { return data_.y[s] - state.trend[s]; };
  auto num_pair = [&](int s) {  // transition numerator for times (s-1, s)
    double lm = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < w.size(); ++j)
      lm = log_add_exp(lm, std::log(w[j]) + bvn_logpdf(eps(s - 1), eps(s),
                                                       state.mu_eps[j] - mubar,
                                                       v, state.rho[j]));
    return lm;
  };
  auto den_at = [&](int s) {  // transition denominator, marginal at time s
    double lm = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < w.size(); ++j)
      lm = log_add_exp(lm, std::log(w[j]) + norm_logpdf(eps(s),
                                                        state.mu_eps[j] - mubar, v));
    return lm;
  };
  const double tv = state.a_trend * state.s2_trend;
  auto nu_term = [&](int s) {  // increment nu_s = alpha_s - alpha_{s-1}
    const double nu = state.trend[s] - state.trend[s - 1];
    return norm_logpdf(nu, state.mu_trend[state.alloc_trend[s - 1]], tv);
  };

  double lt;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  if (t == 0) {
    // The initial mixture density and the first transition denominator cancel.
    lt = num_pair(1) + nu_term(1) +
         norm_logpdf(value, 0.0, priors_.alpha1_var);
  } else if (t == T - 1) {
    lt = num_pair(T - 1) + nu_term(T - 1);
  } else {
    const double den = den_at(t);
    lt = den == neg_inf ? neg_inf
                        : num_pair(t) + num_pair(t + 1) - den + nu_term(t) +
                              nu_term(t + 1);
  }
  state.trend[t] = old;
  return lt;
}

double TsModel::trend_loglik(const State& state) const {
  const int periods = static_cast<int>(data_.y.size()) - 1;
  const double tv = state.a_trend * state.s2_trend;
  double ll = 0.0;
  for (int ti = 0; ti < periods; ++ti) {
    const double nu = state.trend[ti + 1] - state.trend[ti];
    ll += norm_logpdf(nu, state.mu_trend[state.alloc_trend[ti]], tv);
  }
  return ll;
}

double TsModel::trend_atom_prior(const State& state) const {
  double lp = 0.0;
  for (double m : state.mu_trend)
    lp += norm_logpdf(m, 0.0, (1.0 - state.a_trend) * state.s2_trend);
  return lp;
}

double TsModel::log_target_smooth_trend(State& state, double value) const {
  if (!(value > 0.0) || !(value < 1.0))
    return -std::numeric_limits<double>::infinity();
  const double old = state.a_trend;
  state.a_trend = value;
  const double lt = trend_loglik(state) + trend_atom_prior(state) +
                    beta_logpdf(value, priors_.smooth_be_a, priors_.smooth_be_b);
  state.a_trend = old;
  return lt;
}

double TsModel::log_target_s2_trend(State& state, double value) const {
  if (!(value > 0.0)) return -std::numeric_limits<double>::infinity();
  const double old = state.s2_trend;
  state.s2_trend = value;
  const double lt = trend_loglik(state) + trend_atom_prior(state) +
                    priors_.s2_trend.logpdf(value);
  state.s2_trend = old;
  return lt;
}

double TsModel::log_target_mass_trend(const State& state, double value) const {
  if (!(value > 0.0)) return -std::numeric_limits<double>::infinity();
  const int periods = static_cast<int>(data_.y.size()) - 1;
  return state.cluster_count() * std::log(value) + std::lgamma(value) -
         std::lgamma(value + periods) +
         gamma_logpdf(value, priors_.mass_shape, priors_.mass_rate);
}

std::pair<double, double> TsModel::mass_eps_conditional(const State& state) const {
  return {priors_.mass_shape + static_cast<double>(state.sticks.size()),
          priors_.mass_rate - state.sum_log1m()};
}

std::vector<double> TsModel::trend_alloc_log_mass(const State& state, int ti) const {
  const double nu = state.trend[ti + 1] - state.trend[ti];
  const double tv = state.a_trend * state.s2_trend;
  std::vector<long> counts(state.mu_trend.size(), 0);
  for (std::size_t l = 0; l < state.alloc_trend.size(); ++l)
    if (static_cast<int>(l) != ti) counts[state.alloc_trend[l]] += 1;
  std::vector<double> lm;
  lm.reserve(state.mu_trend.size() + 1);
  for (std::size_t j = 0; j < state.mu_trend.size(); ++j) {
    if (counts[j] == 0) {
      lm.push_back(-std::numeric_limits<double>::infinity());
      continue;
    }
    lm.push_back(std::log(static_cast<double>(counts[j])) -
                 0.5 * std::log(state.a_trend) +
                 -0.5 * (nu - state.mu_trend[j]) * (nu - state.mu_trend[j]) / tv);
  }
  lm.push_back(std::log(state.mass_trend) - 0.5 * nu * nu / state.s2_trend);
  return lm;
}

std::pair<double, double> TsModel::trend_atom_conditional(const State& state,
                                                          int j) const {
  long count = 0;
  double sum_nu = 0.0;
  for (std::size_t ti = 0; ti < state.alloc_trend.size(); ++ti)
    if (state.alloc_trend[ti] == j) {
      ++count;
      sum_nu += state.trend[ti + 1] - state.trend[ti];
    }
  const double denom =
      count / state.a_trend + 1.0 / (1.0 - state.a_trend);
  const double mean_post = (sum_nu / state.a_trend) / denom;
  const double var_post = state.s2_trend / denom;
  return {mean_post, var_post};
}

void TsModel::update_atom_means(State& state, Rng& rng) const {
  for (std::size_t j = 0; j < state.mu_eps.size(); ++j) {
    const auto res = amh::mh_step(
        state.mu_eps[j],
        [&](double v) { return log_target_atom_mean(state, static_cast<int>(j), v); },
        amh::Transform::Identity, state.mu_scales[j], rng);
    state.mu_eps[j] = res.value;
    // independence move from the centring prior
    const double prop = rng.normal(0.0, std::sqrt(state.centring_var()));
    const double old = state.mu_eps[j];
    const double ll_old = collapsed_loglik(state);
    state.mu_eps[j] = prop;
    const double ll_prop = collapsed_loglik(state);
    if (!(std::log(rng.uniform_pos()) < ll_prop - ll_old)) state.mu_eps[j] = old;
  }
}

void TsModel::update_sticks(State& state, Rng& rng) const {
  for (std::size_t j = 0; j < state.sticks.size(); ++j) {
    const auto res = amh::mh_step_logit_pair(
        {state.sticks[j], state.log1m_sticks[j]},
        [&](double v, double l) {
          return stick_target_pair(state, static_cast<int>(j), v, l);
        },
        state.stick_scales[j], rng);
    state.set_stick(j, res.value, res.log1m);
    // independence move from the Be(1, M) prior; only the likelihood enters
    const auto [pv, pl] = rng.beta_with_log1m(1.0, state.mass_eps);
    const double old_v = state.sticks[j];
    const double old_l = state.log1m_sticks[j];
    const double ll_old = collapsed_loglik(state);
    state.set_stick(j, pv, pl);
    const double ll_prop = collapsed_loglik(state);
    if (!(std::log(rng.uniform_pos()) < ll_prop - ll_old))
      state.set_stick(j, old_v, old_l);
  }
}

void TsModel::update_rho(State& state, Rng& rng) const {
  for (std::size_t j = 0; j < state.rho.size(); ++j) {
    const auto res = amh::mh_step(
        state.rho[j],
        [&](double v) { return log_target_rho(state, static_cast<int>(j), v); },
        amh::Transform::FisherRho, state.rho_scales[j], rng);
    state.rho[j] = clamp_rho(res.value);
  }
}

void TsModel::update_mass_eps(State& state, Rng& rng) const {
  const auto [shape, rate] = mass_eps_conditional(state);
  state.mass_eps = rng.gamma(shape, rate);
}

void TsModel::update_smooth_eps(State& state, Rng& rng) const {
  const auto res = amh::mh_step(
      state.a_eps, [&](double v) { return log_target_smooth_eps(state, v); },
      amh::Transform::Logit, state.a_eps_scale, rng);
  state.a_eps = clamp_unit(res.value);
}

void TsModel::update_s2_eps(State& state, Rng& rng) const {
  const auto res = amh::mh_step(
      state.s2_eps, [&](double v) { return log_target_s2_eps(state, v); },
      amh::Transform::Log, state.s2_eps_scale, rng);
  state.s2_eps = res.value;
}

void TsModel::update_trend(State& state, Rng& rng) const {
  for (std::size_t t = 0; t < state.trend.size(); ++t) {
    const auto res = amh::mh_step(
        state.trend[t],
        [&](double v) { return log_target_trend_point(state, static_cast<int>(t), v); },
        amh::Transform::Identity, state.trend_scales[t], rng);
    state.trend[t] = res.value;
  }
}

void TsModel::update_trend_alloc(State& state, Rng& rng) const {
  for (std::size_t ti = 0; ti < state.alloc_trend.size(); ++ti) {
    const int old_cluster = state.alloc_trend[ti];
    const std::vector<double> lm = trend_alloc_log_mass(state, static_cast<int>(ti));
    const int pick = atsmc::dpm::sample_categorical_log(lm, rng);
    if (pick == static_cast<int>(state.mu_trend.size())) {
      // new cluster: draw its value from the conditional given this increment
      const double nu = state.trend[ti + 1] - state.trend[ti];
      const double denom =
          1.0 / state.a_trend + 1.0 / (1.0 - state.a_trend);
      const double mean_post = (nu / state.a_trend) / denom;
      const double var_post = state.s2_trend / denom;
      state.mu_trend.push_back(rng.normal(mean_post, std::sqrt(var_post)));
      state.alloc_trend[ti] = static_cast<int>(state.mu_trend.size()) - 1;
    } else {
      state.alloc_trend[ti] = pick;
    }
    // drop the old cluster if it emptied, relabel above it
    if (old_cluster != state.alloc_trend[ti]) {
      long remaining = 0;
      for (int s : state.alloc_trend)
        if (s == old_cluster) ++remaining;
      if (remaining == 0) {
        state.mu_trend.erase(state.mu_trend.begin() + old_cluster);
        for (auto& s : state.alloc_trend)
          if (s > old_cluster) --s;
      }
    }
  }
}

void TsModel::update_trend_atoms(State& state, Rng& rng) const {
  for (std::size_t j = 0; j < state.mu_trend.size(); ++j) {
    const auto [mean_post, var_post] =
        trend_atom_conditional(state, static_cast<int>(j));
    state.mu_trend[j] = rng.normal(mean_post, std::sqrt(var_post));
  }
}

void TsModel::update_smooth_trend(State& state, Rng& rng) const {
  const auto res = amh::mh_step(
      state.a_trend, [&](double v) { return log_target_smooth_trend(state, v); },
      amh::Transform::Logit, state.a_trend_scale, rng);
  state.a_trend = clamp_unit(res.value);
}

void TsModel::update_s2_trend(State& state, Rng& rng) const {
  const auto res = amh::mh_step(
      state.s2_trend, [&](double v) { return log_target_s2_trend(state, v); },
      amh::Transform::Log, state.s2_trend_scale, rng);
  state.s2_trend = res.value;
}

void TsModel::update_mass_trend(State& state, Rng& rng) const {
  const auto res = amh::mh_step(
      state.mass_trend, [&](double v) { return log_target_mass_trend(state, v); },
      amh::Transform::Log, state.mass_trend_scale, rng);
  state.mass_trend = res.value;
}

void TsModel::sweep(State& state, Rng& rng) const {
  update_atom_means(state, rng);
  update_sticks(state, rng);
  update_rho(state, rng);
  update_mass_eps(state, rng);
  update_smooth_eps(state, rng);
  update_s2_eps(state, rng);
  update_trend(state, rng);
  update_trend_alloc(state, rng);
  update_trend_atoms(state, rng);
  update_smooth_trend(state, rng);
  update_s2_trend(state, rng);
  update_mass_trend(state, rng);
}

void TsModel::extend(State& state, Rng& rng) const {
  const auto [v, l] = rng.beta_with_log1m(1.0, state.mass_eps);
  state.push_stick(v, l);
  state.mu_eps.push_back(rng.normal(0.0, std::sqrt(state.centring_var())));
  state.rho.push_back(clamp_rho(rng.uniform(-1.0, 1.0)));
  state.mu_scales.push_back(amh::AdaptiveScale{});
  state.stick_scales.push_back(amh::AdaptiveScale{});
  state.rho_scales.push_back(amh::AdaptiveScale{});
}

TsSummaries ts_summaries(const TsModel& model,
                         const smc::ParticleSystem<TsState>& system,
                         std::span<const double> grid,
                         std::span<const double> heat_grid) {
  TsSummaries out;
  const int T = static_cast<int>(model.data().y.size());
  out.grid.assign(grid.begin(), grid.end());
  out.heat_grid.assign(heat_grid.begin(), heat_grid.end());
  out.trend_median.resize(T);
  out.trend_lo.resize(T);
  out.trend_hi.resize(T);
  out.f_nu.assign(grid.size(), 0.0);
  out.f_eps.assign(grid.size(), 0.0);
  out.transition.assign(heat_grid.size() * heat_grid.size(), 0.0);

  const std::vector<double> w = system.weights();
  std::vector<double> column(system.size());
  for (int t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < system.size(); ++j)
      column[j] = system.particles[j].trend[t];
    out.trend_median[t] = weighted_quantile(column, w, 0.5);
    out.trend_lo[t] = weighted_quantile(column, w, 0.025);
    out.trend_hi[t] = weighted_quantile(column, w, 0.975);
  }
  for (std::size_t j = 0; j < system.size(); ++j) {
    const TsState& s = system.particles[j];
    for (std::size_t g = 0; g < grid.size(); ++g) {
      out.f_nu[g] += w[j] * model.increment_density(s, grid[g]);
      out.f_eps[g] += w[j] * model.stationary_density(s, grid[g]);
    }
    for (std::size_t a = 0; a < heat_grid.size(); ++a)
      for (std::size_t b = 0; b < heat_grid.size(); ++b)
        out.transition[a * heat_grid.size() + b] +=
            w[j] * model.transition_density(s, heat_grid[a], heat_grid[b]);
  }
  return out;
}

}  // namespace atsmc::ts
