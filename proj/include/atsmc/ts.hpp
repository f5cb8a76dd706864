#pragma once

#include <span>
#include <vector>

#include "atsmc/adaptive_mh.hpp"
#include "atsmc/priors.hpp"
#include "atsmc/rng.hpp"
#include "atsmc/smc.hpp"

namespace atsmc::ts {

struct TsData {
  std::vector<double> y;  // standardized series
  void validate() const;
};

struct TsPriors {
  double smooth_be_a = 1.0, smooth_be_b = 19.0;  // a ~ Be(1,19), both blocks
  FoldedT s2_trend{1.0, 0.01};
  FoldedT s2_eps{1.0, 1.0};
  double mass_shape = 1.0, mass_rate = 1.0;  // M ~ Ga(1,1), both blocks
  double alpha1_var = 1.0;                   // alpha_1 ~ N(0, 1)
};

struct TsState {
  std::vector<double> trend;  // alpha_{1:T}
  // stationary block (RSB-truncated bivariate mixture); sticks carry their
  // exact log complements (see dpm::MixtureState)
  std::vector<double> sticks, log1m_sticks, mu_eps, rho;
  double a_eps = 0.05, s2_eps = 1.0, mass_eps = 1.0;
  // trend-increment block (Polya urn)
  std::vector<int> alloc_trend;    // s^alpha_t for t = 2..T, values in [0, K)
  std::vector<double> mu_trend;    // K distinct cluster values
  double a_trend = 0.05, s2_trend = 1.0, mass_trend = 1.0;

  std::vector<amh::AdaptiveScale> mu_scales, stick_scales, rho_scales;
  amh::AdaptiveScale a_eps_scale{}, s2_eps_scale{};
  std::vector<amh::AdaptiveScale> trend_scales;  // one per alpha_t
  amh::AdaptiveScale a_trend_scale{}, s2_trend_scale{}, mass_trend_scale{};

  double cell_var() const { return a_eps * s2_eps; }
  double centring_var() const { return (1.0 - a_eps) * s2_eps; }
  int cluster_count() const { return static_cast<int>(mu_trend.size()); }
  std::vector<double> stick_weights() const;
  double sum_log1m() const;
  void set_stick(std::size_t j, double value, double log1m) {
    sticks[j] = value;
    log1m_sticks[j] = log1m;
  }
  void push_stick(double value, double log1m) {
    sticks.push_back(value);
    log1m_sticks.push_back(log1m);
  }
  void sync_stick_logs();
};

/// Nonparametric time series: random-walk trend with DP-mixture increments
/// (Polya-urn marginalized) plus a mean-constrained stationary component with
/// a bivariate-normal mixture transition. Only the stationary block grows with
/// the truncation.
class TsModel {
 public:
  using State = TsState;

  TsModel(TsData data, TsPriors priors, int initial_atoms);

  State initial_state(Rng& rng) const;
  void sweep(State& state, Rng& rng) const;
  void extend(State& state, Rng& rng) const;
  double loglik(State& state) const { return collapsed_loglik(state); }
  int truncation_size(const State& state) const {
    return static_cast<int>(state.sticks.size());
  }

  /// Log density of the stationary component path eps_t = y_t - alpha_t:
  /// initial mixture density times the product of transition densities.
  double collapsed_loglik(const State& state) const;

  void update_atom_means(State& state, Rng& rng) const;
  void update_sticks(State& state, Rng& rng) const;
  void update_rho(State& state, Rng& rng) const;
  void update_mass_eps(State& state, Rng& rng) const;
  void update_smooth_eps(State& state, Rng& rng) const;
  void update_s2_eps(State& state, Rng& rng) const;
  void update_trend(State& state, Rng& rng) const;
  void update_trend_alloc(State& state, Rng& rng) const;
  void update_trend_atoms(State& state, Rng& rng) const;
  void update_smooth_trend(State& state, Rng& rng) const;
  void update_s2_trend(State& state, Rng& rng) const;
  void update_mass_trend(State& state, Rng& rng) const;

  // Targets and conditionals exposed for audits.
  double log_target_atom_mean(State& state, int j, double value) const;
  double log_target_stick(State& state, int j, double value) const;
  double stick_target_pair(State& state, int j, double value, double log1m) const;
  double log_target_rho(State& state, int j, double value) const;
  double log_target_smooth_eps(State& state, double value) const;
  double log_target_s2_eps(State& state, double value) const;
  double log_target_trend_point(State& state, int t, double value) const;
  double log_target_smooth_trend(State& state, double value) const;
  double log_target_s2_trend(State& state, double value) const;
  double log_target_mass_trend(const State& state, double value) const;
  std::pair<double, double> mass_eps_conditional(const State& state) const;
  std::vector<double> trend_alloc_log_mass(const State& state, int t) const;
  std::pair<double, double> trend_atom_conditional(const State& state, int j) const;

  /// Transition density p(eps_t | eps_prev) under one particle's parameters.
  double transition_density(const State& state, double eps_prev,
                            double eps_t) const;
  double stationary_density(const State& state, double eps) const;
  /// Increment (nu) predictive density under the Polya urn.
  double increment_density(const State& state, double nu) const;

  const TsData& data() const { return data_; }
  const TsPriors& priors() const { return priors_; }
  void set_responses(std::vector<double> y) { data_.y = std::move(y); }

 private:
  double trend_loglik(const State& state) const;  // sum_t N(nu_t | mu_s, a s2)
  double trend_atom_prior(const State& state) const;

  TsData data_;
  TsPriors priors_;
  int initial_atoms_;
};

struct TsSummaries {
  std::vector<double> trend_median, trend_lo, trend_hi;
  std::vector<double> grid;
  std::vector<double> f_nu, f_eps;
  std::vector<double> heat_grid;
  std::vector<double> transition;  // row-major [prev][next]
};

TsSummaries ts_summaries(const TsModel& model,
                         const smc::ParticleSystem<TsState>& system,
                         std::span<const double> grid,
                         std::span<const double> heat_grid);

/// Standardize a series in place: subtract the mean, divide by the sd.
void standardize(std::vector<double>& y);

}  // namespace atsmc::ts
