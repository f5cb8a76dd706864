#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "atsmc/dpm.hpp"
#include "atsmc/random_measures.hpp"
#include "atsmc/rng.hpp"

namespace atsmc::nrmii {

struct CppState {
  std::vector<double> jumps;  // all above the current level, occupied first
  std::vector<double> mu;
  std::vector<double> var;
  std::vector<int> alloc;
  double latent_v = 1.0;
  int level_index = 1;  // k
  double level = 0.1;   // L_k

  bool cache_valid = false;
  std::vector<double> log_mix;
  double sum_jumps = 0.0;
};

/// NRMII normal mixture under the compound-Poisson truncation of a Gamma
/// process: latent-v augmented sampler with exact occupied-jump draws,
/// Poisson-process refresh of the unoccupied jumps, and the marked-Poisson
/// transition between levels.
class CppMixtureModel {
 public:
  using State = CppState;

  CppMixtureModel(std::vector<double> data, dpm::NormalMixtureHyper hyper,
                  double mass, int initial_expected_atoms,
                  measures::LevelScheme scheme = measures::LevelScheme::OneAtom,
                  double xi = 0.0, std::optional<double> fixed_var = {});

  State initial_state(Rng& rng) const;
  void sweep(State& state, Rng& rng) const;
  void extend(State& state, Rng& rng) const;  // marked-Poisson level transition
  double loglik(State& state) const;
  int truncation_size(const State& state) const { return state.level_index; }
  double predictive_density(const State& state, double x) const;
  std::vector<double> density_grid(const State& state,
                                   std::span<const double> grid) const;

  void update_jumps_and_atoms(State& state, Rng& rng) const;
  void update_alloc(State& state, Rng& rng) const;
  void update_v(State& state, Rng& rng) const;

  /// Occupied-jump full conditional: Gamma(count, 1 + v) truncated to
  /// (level, inf) for the Gamma process. Returns {shape, rate}.
  std::pair<double, double> occupied_jump_conditional(const State& state,
                                                      long count) const;
  std::pair<double, double> v_conditional(const State& state) const;
  std::vector<double> alloc_log_mass(const State& state, int i) const;
  /// Draw from Gamma(shape, rate) truncated to (lower, inf). Falls back to a
  /// short MH run when the truncated region's mass underflows.
  static double truncated_gamma(double shape, double rate, double lower, Rng& rng);
  /// Poisson-process draw with intensity eta(x) e^{-vx} on (lower, upper),
  /// by thinning; upper may be infinite.
  std::vector<double> thinned_poisson_jumps(double lower, double upper, double v,
                                            Rng& rng) const;

  double level_at(int k) const;
  const measures::GammaProcessLevy& levy() const { return levy_; }
  const std::vector<double>& data() const { return data_; }

 private:
  void refresh_cache(State& state) const;

  std::vector<double> data_;
  dpm::NormalMixtureHyper hyper_;
  measures::GammaProcessLevy levy_;
  measures::LevelScheme scheme_;
  double xi_;
  double level1_;
  std::optional<double> fixed_var_;
};

}  // namespace atsmc::nrmii
