#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "atsmc/adaptive_mh.hpp"
#include "atsmc/numeric.hpp"
#include "atsmc/random_measures.hpp"
#include "atsmc/rng.hpp"
#include "atsmc/smc.hpp"

namespace atsmc::dpm {

/// Centring measure N(mu | mu0, sigma2) x Ga(1/var | alpha, beta). The mean's
/// prior variance is the fixed hyper sigma2, not the component variance, so
/// atom updates are two-block Gibbs rather than joint normal-inverse-gamma.
struct NormalMixtureHyper {
  double mu0 = 0.0;
  double sigma2 = 10.0;
  double alpha = 3.0;
  double beta = 0.1;

  static NormalMixtureHyper from_data(std::span<const double> y);
};

enum class StickTruncation { Rsb, Sb };
enum class MassPrior { Fixed, UnitExponential };

struct MixtureOptions {
  StickTruncation truncation = StickTruncation::Rsb;
  measures::BetaStickParams stick{};
  MassPrior mass_prior = MassPrior::UnitExponential;
  bool infer_discount = false;  // Poisson-Dirichlet a ~ U(0,1)
  int initial_atoms = 10;
  std::optional<double> fixed_var{};  // pin component variances (tests)
};

struct MixtureState {
  std::vector<double> sticks;  // SB stores the pinned final stick V_N = 1
  // log(1 - V_j), kept alongside the values: near the prior corner (small
  // mass, sticks near one) the complement saturates in double precision while
  // its log stays exact, and the mass conditional needs the log.
  std::vector<double> log1m_sticks;
  std::vector<double> mu;
  std::vector<double> var;
  std::vector<int> alloc;
  std::vector<long> geom;  // RSB latent z_i
  double mass = 1.0;
  double discount = 0.0;
  amh::AdaptiveScale mass_scale{};
  amh::AdaptiveScale discount_scale{};

  // incremental likelihood cache
  bool cache_valid = false;
  std::vector<double> log_mix;  // per observation: log sum_j raw_j k_j(y_i)
  double sum_log1mv = 0.0;      // over random sticks
  double log_norm = 0.0;        // log sum_j raw_j

  void set_stick(std::size_t j, double value, double log1m) {
    sticks[j] = value;
    log1m_sticks[j] = log1m;
  }
  void push_stick(double value, double log1m) {
    sticks.push_back(value);
    log1m_sticks.push_back(log1m);
  }
};

/// Conjugate two-block atom update: mu | var normal, 1/var | mu gamma; an
/// empty component draws from the centring measure.
void normal_gamma_atom_update(std::span<const double> members,
                              const NormalMixtureHyper& hyper, double& mu,
                              double& var, const std::optional<double>& fixed_var,
                              Rng& rng);

/// Posterior (mean, variance) of an atom mean given its members and variance.
std::pair<double, double> atom_mean_conditional(std::span<const double> members,
                                                const NormalMixtureHyper& hyper,
                                                double var);

/// Posterior (shape, rate) of an atom precision given its members and mean.
std::pair<double, double> atom_precision_conditional(
    std::span<const double> members, const NormalMixtureHyper& hyper, double mu);

int sample_categorical_log(std::span<const double> log_mass, Rng& rng);

/// Recompute the stored log complements from the stick values (for states
/// assembled by hand; interior sticks only).
void sync_stick_logs(MixtureState& state);

/// Infinite normal mixture under a stick-breaking prior with RSB or SB
/// truncation; blocked Gibbs kernel plus hyperparameter updates.
class StickMixtureModel {
 public:
  using State = MixtureState;

  StickMixtureModel(std::vector<double> data, NormalMixtureHyper hyper,
                    MixtureOptions options);

  State initial_state(Rng& rng) const;
  void sweep(State& state, Rng& rng) const;
  void extend(State& state, Rng& rng) const;
  double loglik(State& state) const;
  int truncation_size(const State& state) const {
    return static_cast<int>(state.sticks.size());
  }
  double predictive_density(const State& state, double x) const;
  std::vector<double> density_grid(const State& state,
                                   std::span<const double> grid) const;

  // Gibbs full conditionals, exposed individually for audits.
  void update_alloc(State& state, Rng& rng) const;
  void update_geom(State& state, Rng& rng) const;   // RSB only
  void update_sticks(State& state, Rng& rng) const;
  void update_atoms(State& state, Rng& rng) const;
  void update_mass(State& state, Rng& rng) const;   // DP conjugate gamma
  void update_py_params(State& state, Rng& rng) const;  // PY adaptive MH

  std::vector<double> alloc_log_mass(const State& state, int i) const;
  std::pair<double, double> stick_conditional(const State& state, int j) const;
  double geom_success_prob(const State& state) const;
  std::pair<double, double> mass_conditional(const State& state) const;
  double log_stick_hyper_target(const State& state, double discount,
                                double mass) const;

  std::vector<double> weights(const State& state) const;
  int random_stick_count(const State& state) const;

  const std::vector<double>& data() const { return data_; }
  const NormalMixtureHyper& hyper() const { return hyper_; }
  const MixtureOptions& options() const { return options_; }
  void set_data(std::vector<double> y) { data_ = std::move(y); }

 private:
  void refresh_cache(State& state) const;
  measures::BetaStickParams stick_params(const State& state) const;

  std::vector<double> data_;
  NormalMixtureHyper hyper_;
  MixtureOptions options_;
};

struct FkState {
  std::vector<double> jumps;  // strictly decreasing
  std::vector<double> mu;
  std::vector<double> var;
  std::vector<int> alloc;
  double mass = 1.0;
  std::vector<amh::AdaptiveScale> jump_scales;

  bool cache_valid = false;
  std::vector<double> log_mix;  // log sum_j J_j k_j(y_i)
  double sum_jumps = 0.0;
};

/// Infinite normal mixture with the Ferguson-Klass truncation of a Gamma
/// process. Jumps move by adaptive MH on the log scale under the ordering
/// constraint; the mass parameter is conjugate given the jumps.
class FkMixtureModel {
 public:
  using State = FkState;

  FkMixtureModel(std::vector<double> data, NormalMixtureHyper hyper,
                 double initial_mass, MassPrior mass_prior, int initial_atoms,
                 std::optional<double> fixed_var = {});

  State initial_state(Rng& rng) const;
  void sweep(State& state, Rng& rng) const;
  void extend(State& state, Rng& rng) const;
  double loglik(State& state) const;
  int truncation_size(const State& state) const {
    return static_cast<int>(state.jumps.size());
  }
  double predictive_density(const State& state, double x) const;
  std::vector<double> density_grid(const State& state,
                                   std::span<const double> grid) const;

  void update_alloc(State& state, Rng& rng) const;
  void update_atoms(State& state, Rng& rng) const;
  void update_jumps(State& state, Rng& rng) const;
  void update_mass(State& state, Rng& rng) const;

  std::vector<double> alloc_log_mass(const State& state, int i) const;
  /// Full conditional of jump j at value x (log, unnormalized), including the
  /// ordering constraint and the tail-mass term for the smallest jump.
  double jump_log_target(const State& state, int j, double x) const;
  std::pair<double, double> mass_conditional(const State& state) const;

  const std::vector<double>& data() const { return data_; }
  const NormalMixtureHyper& hyper() const { return hyper_; }

 private:
  void refresh_cache(State& state) const;

  std::vector<double> data_;
  NormalMixtureHyper hyper_;
  double initial_mass_;
  MassPrior mass_prior_;
  int initial_atoms_;
  std::optional<double> fixed_var_;
};

/// Posterior-mean mixture density on a grid under the current weights.
template <class Model>
std::vector<double> posterior_mean_density(
    const Model& model, const smc::ParticleSystem<typename Model::State>& system,
    std::span<const double> grid) {
  std::vector<double> out(grid.size(), 0.0);
  const double lse = log_sum_exp(system.log_weights);
  for (std::size_t j = 0; j < system.size(); ++j) {
    const double w = std::exp(system.log_weights[j] - lse);
    const std::vector<double> d = model.density_grid(system.particles[j], grid);
    for (std::size_t g = 0; g < grid.size(); ++g) out[g] += w * d[g];
  }
  return out;
}

/// Mean integrated squared error of a set of density estimates against a
/// reference on a common grid (trapezoid rule).
double mise(const std::vector<std::vector<double>>& run_densities,
            std::span<const double> reference, std::span<const double> grid);

}  // namespace atsmc::dpm
