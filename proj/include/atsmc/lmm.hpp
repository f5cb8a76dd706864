#pragma once

#include <span>
#include <string>
#include <vector>

#include "atsmc/adaptive_mh.hpp"
#include "atsmc/priors.hpp"
#include "atsmc/random_measures.hpp"
#include "atsmc/rng.hpp"
#include "atsmc/smc.hpp"

namespace atsmc::lmm {

/// Rectangular panel: n subjects, T occasions, p fixed-effect regressors and a
/// scalar random-effect design Z = 1 (random intercept).
struct LmmData {
  int n = 0, periods = 0, p = 0;
  std::vector<double> y;  // [i*periods + t]
  std::vector<double> X;  // [(i*periods + t)*p + k]

  double response(int i, int t) const { return y[i * periods + t]; }
  double reg(int i, int t, int k) const { return X[(i * periods + t) * p + k]; }
  void validate() const;
};

struct LmmPriors {
  double smooth_be_a = 1.0, smooth_be_b = 19.0;  // a ~ Be(1,19), both blocks
  FoldedT s2_eps{1.0, 0.01};
  FoldedT s2_gam{1.0, 1.0};
  double mass_shape = 1.0, mass_rate = 1.0;  // M ~ Ga(1,1), both blocks
  double beta_var = 1e6;                     // beta ~ N(0, beta_var * I)
};

/// One mean-constrained CCV mixture block (errors or random effects). Sticks
/// carry their exact log complements; see dpm::MixtureState.
struct LmmBlock {
  std::vector<double> sticks;
  std::vector<double> log1m_sticks;
  std::vector<double> mu;
  double mass = 1.0;
  double smooth = 0.05;  // a, in (0,1)
  double sigma2 = 1.0;
  std::vector<amh::AdaptiveScale> mu_scales;
  std::vector<amh::AdaptiveScale> stick_scales;
  amh::AdaptiveScale smooth_scale{};
  amh::AdaptiveScale s2_scale{};

  std::vector<double> weights() const;  // RSB weights, stable near sticks = 1
  double weighted_mean() const;
  double sum_log1m() const;
  double cell_var() const { return smooth * sigma2; }
  double centring_var() const { return (1.0 - smooth) * sigma2; }
  void set_stick(std::size_t j, double value, double log1m) {
    sticks[j] = value;
    log1m_sticks[j] = log1m;
  }
  void push_stick(double value, double log1m) {
    sticks.push_back(value);
    log1m_sticks.push_back(log1m);
  }
  /// Recompute the log complements from the values (hand-assembled states).
  void sync_stick_logs();
};

struct LmmState {
  std::vector<double> beta;
  LmmBlock eps, gam;
  std::vector<int> alloc_eps;  // n*T
  std::vector<int> alloc_gam;  // n
};

enum class Block { Eps, Gam };

/// Semiparametric linear mixed model with mean-constrained DP mixtures on the
/// errors and the random intercepts; random effects integrated out of the
/// likelihood, non-conjugate parameters moved by adaptive MH.
class LmmModel {
 public:
  using State = LmmState;

  LmmModel(LmmData data, LmmPriors priors, int initial_atoms);

  State initial_state(Rng& rng) const;
  void sweep(State& state, Rng& rng) const;
  void extend(State& state, Rng& rng) const;
  double loglik(State& state) const { return collapsed_loglik(state); }
  int truncation_size(const State& state) const {
    return static_cast<int>(state.eps.sticks.size());
  }

  /// Collapsed log-likelihood f_k: random effects integrated out analytically.
  double collapsed_loglik(const State& state) const;

  // Full sweep pieces, in the order of one sweep.
  void update_atom_means(State& state, Block b, Rng& rng) const;
  void update_sticks(State& state, Block b, Rng& rng) const;
  void update_mass(State& state, Block b, Rng& rng) const;
  void update_smooth(State& state, Block b, Rng& rng) const;
  void update_sigma2(State& state, Block b, Rng& rng) const;
  void update_alloc_eps(State& state, Rng& rng) const;
  void update_alloc_gam(State& state, Rng& rng) const;
  void update_beta(State& state, Rng& rng) const;

  // MH targets (log, unnormalized), exposed for conditional audits.
  double log_target_atom_mean(State& state, Block b, int j, double value) const;
  double log_target_stick(State& state, Block b, int j, double value) const;
  double stick_target_pair(State& state, Block b, int j, double value,
                           double log1m) const;
  double stick_nonprior_pair(State& state, Block b, int j, double value,
                             double log1m) const;
  double log_target_smooth(State& state, Block b, double value) const;
  double log_target_sigma2(State& state, Block b, double value) const;
  std::pair<double, double> mass_conditional(const State& state, Block b) const;
  std::vector<double> alloc_eps_log_mass(const State& state, int i, int t) const;
  std::vector<double> alloc_gam_log_mass(const State& state, int i) const;

  /// Transition retention probability r for a block at the extended
  /// truncation: r = A/(A + p_new) with A = 1 - prod(1-V).
  static double retention_probability(const LmmBlock& block);

  const LmmData& data() const { return data_; }
  const LmmPriors& priors() const { return priors_; }
  void set_responses(std::vector<double> y) { data_.y = std::move(y); }

 private:
  LmmBlock& block(State& state, Block b) const {
    return b == Block::Eps ? state.eps : state.gam;
  }
  const LmmBlock& block(const State& state, Block b) const {
    return b == Block::Eps ? state.eps : state.gam;
  }
  double allocation_log_prior(const State& state, Block b) const;

  LmmData data_;
  LmmPriors priors_;
  int initial_atoms_;
};

lmm::LmmData schoolgirl_design(const std::vector<int>& subject,
                               const std::vector<double>& age,
                               const std::vector<double>& height,
                               const std::vector<int>& group);

struct LmmSummaries {
  std::vector<double> grid;
  std::vector<double> f_eps;
  std::vector<double> f_gam;
  std::vector<double> beta_mean, beta_sd, beta_q025, beta_q50, beta_q975;
  std::vector<double> beta_grid;
  std::vector<std::vector<double>> beta_density;  // per coordinate
};

LmmSummaries lmm_summaries(const LmmModel& model,
                           const smc::ParticleSystem<LmmState>& system,
                           std::span<const double> grid,
                           std::span<const double> beta_grid);

}  // namespace atsmc::lmm
