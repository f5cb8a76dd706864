#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "atsmc/dpm.hpp"
#include "atsmc/lmm.hpp"
#include "atsmc/rng.hpp"
#include "atsmc/stats.hpp"
#include "atsmc/ts.hpp"

namespace atsmc::diag {

struct GoldStandardResult {
  std::vector<double> grid;
  std::vector<double> density;  // posterior-mean density
  std::vector<std::string> names;
  std::vector<double> means;
  std::vector<double> se;  // batch-means Monte Carlo standard errors
  long iterations = 0;
};

/// Long-run fixed-truncation MCMC reference: the model's own Gibbs kernel at a
/// large fixed truncation, summarized by a posterior-mean density grid and
/// batch-means standard errors for the extracted scalars.
template <class Model, class Extract>
GoldStandardResult gold_standard_run(const Model& model, long burn_in, long iters,
                                     int thin, std::span<const double> grid,
                                     const std::vector<std::string>& names,
                                     Extract&& extract, Rng& rng) {
  GoldStandardResult out;
  out.grid.assign(grid.begin(), grid.end());
  out.names = names;
  typename Model::State state = model.initial_state(rng);
  for (long i = 0; i < burn_in; ++i) model.sweep(state, rng);
  std::vector<std::vector<double>> traces(names.size());
  std::vector<double> density(grid.size(), 0.0);
  long kept = 0;
  for (long i = 0; i < iters; ++i) {
    model.sweep(state, rng);
    if (i % thin != 0) continue;
    ++kept;
    const std::vector<double> values = extract(state);
    for (std::size_t k = 0; k < names.size(); ++k) traces[k].push_back(values[k]);
    const std::vector<double> d = model.density_grid(state, grid);
    for (std::size_t g = 0; g < grid.size(); ++g) density[g] += d[g];
  }
  for (double& d : density) d /= static_cast<double>(kept);
  out.density = std::move(density);
  out.iterations = iters;
  for (std::size_t k = 0; k < names.size(); ++k) {
    out.means.push_back(mean(traces[k]));
    out.se.push_back(batch_means_se(traces[k]));
  }
  return out;
}

struct GewekeResult {
  std::vector<std::string> names;
  std::vector<KsResult> ks;
  double min_p_value = 1.0;
};

/// Successive-conditional joint-distribution test: alternate posterior sweeps
/// with data regeneration and compare parameter marginals against direct
/// prior draws by two-sample KS. Under a correct sampler the chain marginals
/// are the prior marginals.
template <class Chain>
GewekeResult geweke_test(Chain& chain, long iters, int thin, long prior_draws,
                         Rng& rng) {
  const std::vector<std::string> names = chain.names();
  typename Chain::State state = chain.initial(rng);
  chain.regenerate(state, rng);  // start exactly at p(theta) p(y | theta)
  std::vector<std::vector<double>> samples(names.size());
  for (long i = 0; i < iters; ++i) {
    chain.transition(state, rng);
    chain.regenerate(state, rng);
    if (i % thin != 0) continue;
    const std::vector<double> values = chain.extract(state);
    for (std::size_t k = 0; k < names.size(); ++k) samples[k].push_back(values[k]);
  }
  std::vector<std::vector<double>> prior(names.size());
  for (long i = 0; i < prior_draws; ++i) {
    const std::vector<double> values = chain.prior_draw(rng);
    for (std::size_t k = 0; k < names.size(); ++k) prior[k].push_back(values[k]);
  }
  GewekeResult out;
  out.names = names;
  for (std::size_t k = 0; k < names.size(); ++k) {
    out.ks.push_back(ks_two_sample(samples[k], prior[k]));
    out.min_p_value = std::min(out.min_p_value, out.ks.back().p_value);
  }
  return out;
}

/// Geweke chain for the stick-breaking normal mixture: parameters plus data
/// regenerated from the allocated components. Tracks V_1, M and mu_1.
class DpmGewekeChain {
 public:
  using State = dpm::MixtureState;

  DpmGewekeChain(dpm::StickMixtureModel model, int n_obs);

  State initial(Rng& rng) const;
  void transition(State& state, Rng& rng);
  void regenerate(State& state, Rng& rng);
  std::vector<double> extract(const State& state) const;
  std::vector<double> prior_draw(Rng& rng) const;
  std::vector<std::string> names() const { return {"stick_1", "mass", "mu_1"}; }

  dpm::StickMixtureModel& model() { return model_; }
  /// Replace the parameter-update kernel (fault injection in tests).
  void set_sweep_override(std::function<void(State&, Rng&)> f) {
    sweep_override_ = std::move(f);
  }

 private:
  dpm::StickMixtureModel model_;
  int n_obs_;
  std::function<void(State&, Rng&)> sweep_override_;
};

/// Geweke chain for the linear mixed model; requires proper (bounded) folded-t
/// priors. Tracks a_eps, sigma2_eps and M_eps.
class LmmGewekeChain {
 public:
  using State = lmm::LmmState;

  explicit LmmGewekeChain(lmm::LmmModel model);

  State initial(Rng& rng) const;
  void transition(State& state, Rng& rng);
  void regenerate(State& state, Rng& rng);
  std::vector<double> extract(const State& state) const;
  std::vector<double> prior_draw(Rng& rng) const;
  std::vector<std::string> names() const {
    return {"a_eps", "sigma2_eps", "mass_eps"};
  }

  lmm::LmmModel& model() { return model_; }

 private:
  lmm::LmmModel model_;
};

/// Geweke chain for the time-series model; requires proper folded-t priors.
/// Tracks a_trend and sigma2_trend.
class TsGewekeChain {
 public:
  using State = ts::TsState;

  explicit TsGewekeChain(ts::TsModel model);

  State initial(Rng& rng) const;
  void transition(State& state, Rng& rng);
  void regenerate(State& state, Rng& rng);
  std::vector<double> extract(const State& state) const;
  std::vector<double> prior_draw(Rng& rng) const;
  std::vector<std::string> names() const { return {"a_trend", "sigma2_trend"}; }

  ts::TsModel& model() { return model_; }

 private:
  ts::TsModel model_;
};

}  // namespace atsmc::diag
