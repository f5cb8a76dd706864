#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "atsmc/numeric.hpp"
#include "atsmc/rng.hpp"

namespace atsmc::smc {

// Model contract consumed by the engine. A model binds the data and priors;
// its State carries one particle: the extendable truncation block, global
// parameters, hyperparameters and latent variables.
template <class M>
concept SmcModel = requires(const M m, typename M::State s, Rng r) {
  { m.initial_state(r) } -> std::same_as<typename M::State>;
  { m.sweep(s, r) };
  { m.extend(s, r) };
  { m.loglik(s) } -> std::same_as<double>;
  { m.truncation_size(s) } -> std::same_as<int>;
};

struct EssRecord {
  long iteration = 0;
  double ess = 0.0;
  double discrepancy = std::numeric_limits<double>::quiet_NaN();
  bool resampled = false;
};

enum class Discrepancy { EssDiff, Predictive };

struct SmcConfig {
  int particles = 1000;            // S
  double epsilon = 1e-3;           // stopping tolerance; delta = epsilon * S
  int m_stop = 3;                  // consecutive-window length of the stop rule
  int n_rejuv = 3;                 // MCMC sweeps per rejuvenation
  double resample_threshold = 0.7; // b; resample when ESS < b*S
  long max_iters = 5000;
  long burn_in = 5000;             // initial-posterior MCMC burn-in
  int thin = 5;                    // initial-posterior thinning
  std::uint64_t seed = 0;
  int threads = 1;
  Discrepancy discrepancy = Discrepancy::EssDiff;
  double predictive_point = 0.0;   // y*, Predictive mode only

  void validate() const {
    if (particles < 2) throw std::domain_error("SmcConfig: need at least 2 particles");
    if (!(epsilon > 0.0)) throw std::domain_error("SmcConfig: epsilon must be positive");
    if (m_stop < 1) throw std::domain_error("SmcConfig: m_stop must be >= 1");
    if (n_rejuv < 1) throw std::domain_error("SmcConfig: n_rejuv must be >= 1");
    if (!(resample_threshold > 0.0) || !(resample_threshold <= 1.0))
      throw std::domain_error("SmcConfig: resample threshold must lie in (0,1]");
    if (max_iters < 1) throw std::domain_error("SmcConfig: max_iters must be >= 1");
    if (burn_in < 0 || thin < 1) throw std::domain_error("SmcConfig: bad burn-in/thin");
  }
};

template <class State>
struct ParticleSystem {
  std::vector<State> particles;
  std::vector<double> log_weights;   // reset to 0 after resampling
  std::vector<double> loglik_cache;  // log-likelihood at the current truncation
  long k = 1;                        // truncation index; 1 is the initial level
  std::vector<EssRecord> ess_trace;
  std::uint64_t seed = 0;

  std::size_t size() const { return particles.size(); }

  /// Normalized linear weights.
  std::vector<double> weights() const {
    std::vector<double> w(log_weights.size());
    const double lse = log_sum_exp(log_weights);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = std::exp(log_weights[j] - lse);
    return w;
  }
};

/// (sum w)^2 / sum w^2 for nonnegative weights.
inline double ess(std::span<const double> weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::domain_error("ess: weights must be nonnegative");
    s += w;
    s2 += w * w;
  }
  if (!(s > 0.0)) throw std::domain_error("ess: all weights are zero");
  return s * s / s2;
}

/// ESS from log-weights, stabilized by subtracting the maximum.
inline double ess_log(std::span<const double> log_weights) {
  double m = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) m = std::max(m, lw);
  if (m == -std::numeric_limits<double>::infinity())
    throw std::domain_error("ess_log: degenerate particle system");
  double s = 0.0, s2 = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - m);
    s += w;
    s2 += w * w;
  }
  return s * s / s2;
}

/// Systematic resampling: one uniform u ~ U(0, 1/S), selection at the ladder
/// positions u + j/S on the normalized cumulative weights.
inline std::vector<std::size_t> systematic_resample(std::span<const double> weights,
                                                    Rng& rng) {
  const std::size_t s = weights.size();
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::domain_error("systematic_resample: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw std::domain_error("systematic_resample: all weights zero");
  const double u = rng.uniform() / static_cast<double>(s);
  std::vector<std::size_t> idx(s);
  double cum = weights[0] / total;
  std::size_t i = 0;
  for (std::size_t j = 0; j < s; ++j) {
    const double pos = u + static_cast<double>(j) / static_cast<double>(s);
    while (pos > cum && i + 1 < s) {
      ++i;
      cum += weights[i] / total;
    }
    idx[j] = i;
  }
  return idx;
}

/// Weighted posterior estimate of f under the current truncation.
template <class State, class F>
double estimate(const ParticleSystem<State>& system, F&& f) {
  const double lse = log_sum_exp(system.log_weights);
  if (!std::isfinite(lse)) throw std::domain_error("estimate: degenerate weights");
  double acc = 0.0;
  for (std::size_t j = 0; j < system.size(); ++j)
    acc += std::exp(system.log_weights[j] - lse) * f(system.particles[j]);
  return acc;
}

/// Weighted predictive density at a point, for models exposing a per-particle
/// predictive evaluator.
template <class Model>
double predictive_estimate(const Model& model,
                           const ParticleSystem<typename Model::State>& system,
                           double y_star) {
  return estimate(system, [&](const typename Model::State& s) {
    return model.predictive_density(s, y_star);
  });
}

/// |p_{k+1}(y*) - p_k(y*)|: the predictive-density discrepancy between two
/// particle systems, an alternative to the ESS discrepancy.
template <class Model>
double predictive_discrepancy(const Model& model,
                              const ParticleSystem<typename Model::State>& system_k,
                              const ParticleSystem<typename Model::State>& system_k1,
                              double y_star) {
  return std::abs(predictive_estimate(model, system_k1, y_star) -
                  predictive_estimate(model, system_k, y_star));
}

namespace detail {
// Phase tags for deterministic per-particle stream derivation.
inline std::uint64_t phase_extend(long iter) { return 4 * static_cast<std::uint64_t>(iter); }
inline std::uint64_t phase_rejuv(long iter) { return 4 * static_cast<std::uint64_t>(iter) + 1; }
inline std::uint64_t phase_resample(long iter) { return 4 * static_cast<std::uint64_t>(iter) + 2; }
}  // namespace detail

/// Algorithm step 1: extend every particle's truncation block by one draw from
/// the model's conditional prior transition. Weights are untouched.
template <SmcModel Model>
void extend(const Model& model, ParticleSystem<typename Model::State>& system,
            long iter, int threads) {
  parallel_for(system.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      Rng rng = Rng::stream(system.seed, detail::phase_extend(iter), j);
      model.extend(system.particles[j], rng);
    }
  });
  system.k += 1;
}

/// Algorithm step 2: multiply each weight by the incremental likelihood ratio
/// of the new truncation against the cached previous one, in log space.
/// A particle whose likelihood turns non-finite is flagged with weight -inf.
template <SmcModel Model>
int reweight(const Model& model, ParticleSystem<typename Model::State>& system,
             int threads) {
  std::vector<int> bad(system.size(), 0);
  parallel_for(system.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      const double ll = model.loglik(system.particles[j]);
      if (std::isfinite(ll)) {
        system.log_weights[j] += ll - system.loglik_cache[j];
        system.loglik_cache[j] = ll;
      } else {
        system.log_weights[j] = -std::numeric_limits<double>::infinity();
        bad[j] = 1;
      }
    }
  });
  int flagged = 0;
  for (int b : bad) flagged += b;
  return flagged;
}

/// Algorithm step 4(c): advance each particle with n_rejuv full MCMC sweeps
/// targeting the current truncated posterior. Per-particle streams are derived
/// from (seed, iteration, index), so resampled duplicates decorrelate.
template <SmcModel Model>
void rejuvenate(const Model& model, ParticleSystem<typename Model::State>& system,
                int n_rejuv, long iter, int threads) {
  if (n_rejuv == 0) return;
  parallel_for(system.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      Rng rng = Rng::stream(system.seed, detail::phase_rejuv(iter), j);
      for (int sweep = 0; sweep < n_rejuv; ++sweep)
        model.sweep(system.particles[j], rng);
      system.loglik_cache[j] = model.loglik(system.particles[j]);
    }
  });
}

struct RunDiagnostics {
  long stop_index = 0;  // R
  bool converged = false;
  int non_finite_particles = 0;
};

class EssCollapseError : public std::runtime_error {
 public:
  explicit EssCollapseError(const std::string& what) : std::runtime_error(what) {}
};

/// Draw the initial particle set from pi_1 by a single MCMC chain with
/// burn-in and thinning, unit weights.
template <SmcModel Model>
ParticleSystem<typename Model::State> initialize(const Model& model,
                                                 const SmcConfig& config) {
  ParticleSystem<typename Model::State> system;
  system.seed = config.seed;
  Rng rng = Rng::stream(config.seed, 0, 0);
  typename Model::State chain = model.initial_state(rng);
  for (long i = 0; i < config.burn_in; ++i) model.sweep(chain, rng);
  system.particles.reserve(config.particles);
  for (int j = 0; j < config.particles; ++j) {
    for (int t = 0; t < config.thin; ++t) model.sweep(chain, rng);
    system.particles.push_back(chain);
  }
  system.log_weights.assign(config.particles, 0.0);
  system.loglik_cache.resize(config.particles);
  parallel_for(system.size(), config.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j)
      system.loglik_cache[j] = model.loglik(system.particles[j]);
  });
  return system;
}

/// The adaptive truncation loop: extend / reweight / ESS / resample-rejuvenate
/// until the discrepancy stays below delta = epsilon*S for m_stop consecutive
/// iterations, or max_iters is hit (result flagged non-converged).
template <SmcModel Model>
RunDiagnostics run(const Model& model, ParticleSystem<typename Model::State>& system,
                   const SmcConfig& config) {
  config.validate();
  const double s_count = static_cast<double>(config.particles);
  const double delta = config.epsilon * s_count;
  RunDiagnostics diag;

  // Unit initial weights give ESS = S; that is the first baseline.
  double baseline_ess = ess_log(system.log_weights);
  double baseline_pred = 0.0;
  if (config.discrepancy == Discrepancy::Predictive) {
    if constexpr (requires(const Model& m, const typename Model::State& s) {
                    { m.predictive_density(s, 0.0) } -> std::same_as<double>;
                  }) {
      baseline_pred = predictive_estimate(model, system, config.predictive_point);
    } else {
      throw std::domain_error("run: model has no predictive density evaluator");
    }
  }

  int streak = 0;
  for (long iter = 1; iter <= config.max_iters; ++iter) {
    extend(model, system, iter, config.threads);
    diag.non_finite_particles += reweight(model, system, config.threads);

    const double current_ess = ess_log(system.log_weights);
    if (current_ess < 2.0)
      throw EssCollapseError("particle system collapsed: ESS " +
                             std::to_string(current_ess) + " at iteration " +
                             std::to_string(iter));

    double discrepancy;
    if (config.discrepancy == Discrepancy::EssDiff) {
      discrepancy = std::abs(current_ess - baseline_ess);
    } else {
      double current_pred = baseline_pred;
      if constexpr (requires(const Model& m, const typename Model::State& s) {
                      { m.predictive_density(s, 0.0) } -> std::same_as<double>;
                    }) {
        current_pred = predictive_estimate(model, system, config.predictive_point);
      }
      discrepancy = std::abs(current_pred - baseline_pred);
      baseline_pred = current_pred;
    }
    system.ess_trace.push_back({iter, current_ess, discrepancy, false});

    streak = discrepancy < delta ? streak + 1 : 0;

    if (current_ess < config.resample_threshold * s_count) {
      system.ess_trace.back().resampled = true;
      Rng resample_rng = Rng::stream(system.seed, detail::phase_resample(iter), 0);
      const std::vector<std::size_t> idx =
          systematic_resample(system.weights(), resample_rng);
      std::vector<typename Model::State> next;
      next.reserve(system.size());
      for (std::size_t j : idx) next.push_back(system.particles[j]);
      system.particles = std::move(next);
      std::fill(system.log_weights.begin(), system.log_weights.end(), 0.0);
      rejuvenate(model, system, config.n_rejuv, iter, config.threads);
      // Weights were reset, so the recomputed ESS baseline for the next
      // comparison is exactly S; a pre/post-resample ESS jump never enters D.
      baseline_ess = ess_log(system.log_weights);
      if (config.discrepancy == Discrepancy::Predictive) {
        if constexpr (requires(const Model& m, const typename Model::State& s) {
                        { m.predictive_density(s, 0.0) } -> std::same_as<double>;
                      }) {
          baseline_pred = predictive_estimate(model, system, config.predictive_point);
        }
      }
    } else {
      baseline_ess = current_ess;
    }

    if (streak >= config.m_stop) {
      diag.stop_index = iter;
      diag.converged = true;
      return diag;
    }
  }
  diag.stop_index = config.max_iters;
  diag.converged = false;
  return diag;
}

template <SmcModel Model>
struct RunResult {
  ParticleSystem<typename Model::State> system;
  RunDiagnostics diagnostics;
};

template <SmcModel Model>
RunResult<Model> run_adaptive(const Model& model, const SmcConfig& config) {
  config.validate();
  RunResult<Model> result{initialize(model, config), {}};
  result.diagnostics = run(model, result.system, config);
  return result;
}

}  // namespace atsmc::smc
