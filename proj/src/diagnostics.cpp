#include "atsmc/diagnostics.hpp"

#include <cmath>
#include <stdexcept>

#include "atsmc/numeric.hpp"

namespace atsmc::diag {

DpmGewekeChain::DpmGewekeChain(dpm::StickMixtureModel model, int n_obs)
    : model_(std::move(model)), n_obs_(n_obs) {
  if (static_cast<int>(model_.data().size()) != n_obs_)
    throw std::invalid_argument("DpmGewekeChain: model data size mismatch");
}

DpmGewekeChain::State DpmGewekeChain::initial(Rng& rng) const {
  return model_.initial_state(rng);
}

void DpmGewekeChain::transition(State& state, Rng& rng) {
  if (sweep_override_)
    sweep_override_(state, rng);
  else
    model_.sweep(state, rng);
}

void DpmGewekeChain::regenerate(State& state, Rng& rng) {
  std::vector<double> y(n_obs_);
  for (int i = 0; i < n_obs_; ++i) {
    const int j = state.alloc[i];
    y[i] = rng.normal(state.mu[j], std::sqrt(state.var[j]));
  }
  model_.set_data(std::move(y));
  state.cache_valid = false;
}

std::vector<double> DpmGewekeChain::extract(const State& state) const {
  return {state.sticks[0], state.mass, state.mu[0]};
}

std::vector<double> DpmGewekeChain::prior_draw(Rng& rng) const {
  const auto& opt = model_.options();
  const double mass = opt.mass_prior == dpm::MassPrior::UnitExponential
                          ? rng.exponential(1.0)
                          : opt.stick.mass;
  measures::BetaStickParams p = opt.stick;
  p.mass = mass;
  const double v1 = rng.beta(p.shape_a(1), p.shape_b(1));
  const double mu1 = rng.normal(model_.hyper().mu0, std::sqrt(model_.hyper().sigma2));
  return {v1, mass, mu1};
}

LmmGewekeChain::LmmGewekeChain(lmm::LmmModel model) : model_(std::move(model)) {
  if (!model_.priors().s2_eps.upper || !model_.priors().s2_gam.upper)
    throw std::invalid_argument(
        "LmmGewekeChain: folded-t priors must be bounded to be proper");
}

LmmGewekeChain::State LmmGewekeChain::initial(Rng& rng) const {
  State state = model_.initial_state(rng);
  // beta from its actual prior; the production initializer pins it at zero
  for (auto& b : state.beta)
    b = rng.normal(0.0, std::sqrt(model_.priors().beta_var));
  return state;
}

void LmmGewekeChain::transition(State& state, Rng& rng) {
  model_.sweep(state, rng);
}

void LmmGewekeChain::regenerate(State& state, Rng& rng) {
  const auto& d = model_.data();
  const double mubar_e = state.eps.weighted_mean();
  const double mubar_g = state.gam.weighted_mean();
  std::vector<double> y(d.n * d.periods);
  for (int i = 0; i < d.n; ++i) {
    const double gamma_i =
        rng.normal(state.gam.mu[state.alloc_gam[i]] - mubar_g,
                   std::sqrt(state.gam.cell_var()));
    for (int t = 0; t < d.periods; ++t) {
      double xb = 0.0;
      for (int k = 0; k < d.p; ++k) xb += d.reg(i, t, k) * state.beta[k];
      const double eps =
          rng.normal(state.eps.mu[state.alloc_eps[i * d.periods + t]] - mubar_e,
                     std::sqrt(state.eps.cell_var()));
      y[i * d.periods + t] = xb + gamma_i + eps;
    }
  }
  model_.set_responses(std::move(y));
}

std::vector<double> LmmGewekeChain::extract(const State& state) const {
  return {state.eps.smooth, state.eps.sigma2, state.eps.mass};
}

std::vector<double> LmmGewekeChain::prior_draw(Rng& rng) const {
  const auto& pr = model_.priors();
  return {rng.beta(pr.smooth_be_a, pr.smooth_be_b), pr.s2_eps.sample(rng),
          rng.gamma(pr.mass_shape, pr.mass_rate)};
}

TsGewekeChain::TsGewekeChain(ts::TsModel model) : model_(std::move(model)) {
  if (!model_.priors().s2_trend.upper || !model_.priors().s2_eps.upper)
    throw std::invalid_argument(
        "TsGewekeChain: folded-t priors must be bounded to be proper");
}

TsGewekeChain::State TsGewekeChain::initial(Rng& rng) const {
  State state = model_.initial_state(rng);
  // the trend path from its actual prior: random walk with mixture increments
  const int T = static_cast<int>(model_.data().y.size());
  state.trend[0] = rng.normal(0.0, std::sqrt(model_.priors().alpha1_var));
  for (int t = 1; t < T; ++t) {
    const double mu = state.mu_trend[state.alloc_trend[t - 1]];
    state.trend[t] =
        state.trend[t - 1] +
        rng.normal(mu, std::sqrt(state.a_trend * state.s2_trend));
  }
  return state;
}

void TsGewekeChain::transition(State& state, Rng& rng) {
  model_.sweep(state, rng);
}

void TsGewekeChain::regenerate(State& state, Rng& rng) {
  const int T = static_cast<int>(model_.data().y.size());
  const std::vector<double> w = state.stick_weights();
  double mubar = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) mubar += w[j] * state.mu_eps[j];
  const double v = state.cell_var();
  auto pick_weighted = [&](const std::vector<double>& probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    double u = rng.uniform_pos() * total;
    double acc = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
      acc += probs[j];
      if (u <= acc) return static_cast<int>(j);
    }
    return static_cast<int>(probs.size()) - 1;
  };
  std::vector<double> eps(T);
  int j = pick_weighted(w);
  eps[0] = rng.normal(state.mu_eps[j] - mubar, std::sqrt(v));
  std::vector<double> cond(w.size());
  for (int t = 1; t < T; ++t) {
    for (std::size_t l = 0; l < w.size(); ++l)
      cond[l] = w[l] * norm_pdf(eps[t - 1], state.mu_eps[l] - mubar, v);
    j = pick_weighted(cond);
    const double m = state.mu_eps[j] - mubar;
    const double rho = state.rho[j];
    eps[t] = rng.normal(m + rho * (eps[t - 1] - m),
                        std::sqrt(v * (1.0 - rho * rho)));
  }
  std::vector<double> y(T);
  for (int t = 0; t < T; ++t) y[t] = state.trend[t] + eps[t];
  model_.set_responses(std::move(y));
}

std::vector<double> TsGewekeChain::extract(const State& state) const {
  return {state.a_trend, state.s2_trend};
}

std::vector<double> TsGewekeChain::prior_draw(Rng& rng) const {
  const auto& pr = model_.priors();
  return {rng.beta(pr.smooth_be_a, pr.smooth_be_b), pr.s2_trend.sample(rng)};
}

}  // namespace atsmc::diag
