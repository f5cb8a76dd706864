#include "atsmc/dpm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "atsmc/stats.hpp"

namespace atsmc::dpm {

namespace {

double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// log V from the stored pair; exact when the value saturates at 1.
double log_stick_value(double value, double log1m) {
  return log1m < -1e-9 ? log1m_exp(log1m) : std::log(value);
}

}  // namespace

NormalMixtureHyper NormalMixtureHyper::from_data(std::span<const double> y) {
  NormalMixtureHyper h;
  h.mu0 = mean(y);
  h.sigma2 = 10.0;
  h.alpha = 3.0;
  h.beta = 0.1 * (h.alpha - 1.0) * variance(y);
  return h;
}

void sync_stick_logs(MixtureState& state) {
  state.log1m_sticks.resize(state.sticks.size());
  for (std::size_t j = 0; j < state.sticks.size(); ++j)
    state.log1m_sticks[j] =
        state.sticks[j] >= 1.0 ? -std::numeric_limits<double>::infinity()
                               : std::log1p(-state.sticks[j]);
}

std::pair<double, double> atom_mean_conditional(std::span<const double> members,
                                                const NormalMixtureHyper& hyper,
                                                double var) {
  double sum = 0.0;
  for (double y : members) sum += y;
  const double prec =
      1.0 / hyper.sigma2 + static_cast<double>(members.size()) / var;
  return {(hyper.mu0 / hyper.sigma2 + sum / var) / prec, 1.0 / prec};
}

std::pair<double, double> atom_precision_conditional(
    std::span<const double> members, const NormalMixtureHyper& hyper, double mu) {
  double ssq = 0.0;
  for (double y : members) ssq += (y - mu) * (y - mu);
  return {hyper.alpha + 0.5 * static_cast<double>(members.size()),
          hyper.beta + 0.5 * ssq};
}

void normal_gamma_atom_update(std::span<const double> members,
                              const NormalMixtureHyper& hyper, double& mu,
                              double& var, const std::optional<double>& fixed_var,
                              Rng& rng) {
  if (members.empty()) {
    mu = rng.normal(hyper.mu0, std::sqrt(hyper.sigma2));
    var = fixed_var ? *fixed_var : 1.0 / rng.gamma(hyper.alpha, hyper.beta);
    return;
  }
  const auto [mean_post, var_post] = atom_mean_conditional(members, hyper, var);
  mu = rng.normal(mean_post, std::sqrt(var_post));
  if (fixed_var) {
    var = *fixed_var;
  } else {
    const auto [shape, rate] = atom_precision_conditional(members, hyper, mu);
    var = 1.0 / rng.gamma(shape, rate);
  }
}

int sample_categorical_log(std::span<const double> log_mass, Rng& rng) {
  const double lse = log_sum_exp(log_mass);
  if (!std::isfinite(lse))
    throw std::runtime_error("sample_categorical_log: all masses zero");
  double u = rng.uniform_pos();
  double acc = 0.0;
  for (std::size_t j = 0; j < log_mass.size(); ++j) {
    acc += std::exp(log_mass[j] - lse);
    if (u <= acc) return static_cast<int>(j);
  }
  return static_cast<int>(log_mass.size()) - 1;
}

StickMixtureModel::StickMixtureModel(std::vector<double> data,
                                     NormalMixtureHyper hyper,
                                     MixtureOptions options)
    : data_(std::move(data)), hyper_(hyper), options_(options) {
  if (data_.empty()) throw std::invalid_argument("StickMixtureModel: no data");
  if (options_.initial_atoms < 1)
    throw std::invalid_argument("StickMixtureModel: initial atoms must be >= 1");
  options_.stick.validate();
}

measures::BetaStickParams StickMixtureModel::stick_params(const State& state) const {
  measures::BetaStickParams p = options_.stick;
  p.mass = state.mass;
  p.discount = state.discount;
  return p;
}

int StickMixtureModel::random_stick_count(const State& state) const {
  const int n = static_cast<int>(state.sticks.size());
  return options_.truncation == StickTruncation::Sb ? n - 1 : n;
}

std::vector<double> StickMixtureModel::weights(const State& state) const {
  // stable weights from the (value, log complement) pairs
  const std::size_t n_atoms = state.sticks.size();
  const int n_random = random_stick_count(state);
  std::vector<double> log_raw(n_atoms);
  double acc = 0.0;
  for (std::size_t j = 0; j < n_atoms; ++j) {
    log_raw[j] = log_stick_value(state.sticks[j], state.log1m_sticks[j]) + acc;
    if (static_cast<int>(j) < n_random) acc += state.log1m_sticks[j];
  }
  const double lse = log_sum_exp(log_raw);
  std::vector<double> w(n_atoms);
  for (std::size_t j = 0; j < n_atoms; ++j) w[j] = std::exp(log_raw[j] - lse);
  return w;
}

StickMixtureModel::State StickMixtureModel::initial_state(Rng& rng) const {
  State state;
  state.mass = options_.mass_prior == MassPrior::UnitExponential
                   ? rng.exponential(1.0)
                   : options_.stick.mass;
  state.discount = options_.infer_discount ? rng.uniform_pos()
                                           : options_.stick.discount;
  const int n_atoms = options_.initial_atoms;
  const measures::BetaStickParams params = stick_params(state);
  const int n_random = options_.truncation == StickTruncation::Sb ? n_atoms - 1
                                                                  : n_atoms;
  for (int j = 0; j < n_random; ++j) {
    const auto [v, l] = rng.beta_with_log1m(params.shape_a(j + 1),
                                            params.shape_b(j + 1));
    state.push_stick(v, l);
  }
  if (options_.truncation == StickTruncation::Sb)
    state.push_stick(1.0, -std::numeric_limits<double>::infinity());
  state.mu.resize(n_atoms);
  state.var.resize(n_atoms);
  for (int j = 0; j < n_atoms; ++j)
    normal_gamma_atom_update({}, hyper_, state.mu[j], state.var[j],
                             options_.fixed_var, rng);
  const std::vector<double> w = weights(state);
  state.alloc.resize(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    double u = rng.uniform_pos();
    double acc = 0.0;
    int pick = n_atoms - 1;
    for (int j = 0; j < n_atoms; ++j) {
      acc += w[j];
      if (u <= acc) {
        pick = j;
        break;
      }
    }
    state.alloc[i] = pick;
  }
  state.geom.assign(data_.size(), 0);
  if (options_.truncation == StickTruncation::Rsb) update_geom(state, rng);
  state.cache_valid = false;
  return state;
}

void StickMixtureModel::refresh_cache(State& state) const {
  const std::size_t n = data_.size();
  const std::size_t n_atoms = state.sticks.size();
  state.log_mix.assign(n, -std::numeric_limits<double>::infinity());
  std::vector<double> log_raw(n_atoms);
  double acc = 0.0;
  const int n_random = random_stick_count(state);
  for (std::size_t j = 0; j < n_atoms; ++j) {
    log_raw[j] = log_stick_value(state.sticks[j], state.log1m_sticks[j]) + acc;
    if (static_cast<int>(j) < n_random) acc += state.log1m_sticks[j];
  }
  state.sum_log1mv = acc;
  state.log_norm =
      options_.truncation == StickTruncation::Sb ? 0.0 : log1m_exp(acc);
  for (std::size_t i = 0; i < n; ++i) {
    double lm = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_atoms; ++j)
      lm = log_add_exp(lm, log_raw[j] + norm_logpdf(data_[i], state.mu[j], state.var[j]));
    state.log_mix[i] = lm;
  }
  state.cache_valid = true;
}

double StickMixtureModel::loglik(State& state) const {
  if (!state.cache_valid) refresh_cache(state);
  double s = 0.0;
  for (double lm : state.log_mix) s += lm;
  return s - static_cast<double>(data_.size()) * state.log_norm;
}

std::vector<double> StickMixtureModel::alloc_log_mass(const State& state,
                                                      int i) const {
  const std::size_t n_atoms = state.sticks.size();
  std::vector<double> lm(n_atoms);
  double acc = 0.0;
  const int n_random = random_stick_count(state);
  for (std::size_t j = 0; j < n_atoms; ++j) {
    lm[j] = log_stick_value(state.sticks[j], state.log1m_sticks[j]) + acc +
            norm_logpdf(data_[i], state.mu[j], state.var[j]);
    if (static_cast<int>(j) < n_random) acc += state.log1m_sticks[j];
  }
  return lm;
}

void StickMixtureModel::update_alloc(State& state, Rng& rng) const {
  for (std::size_t i = 0; i < data_.size(); ++i)
    state.alloc[i] = sample_categorical_log(alloc_log_mass(state, i), rng);
  state.cache_valid = false;
}

double StickMixtureModel::geom_success_prob(const State& state) const {
  double acc = 0.0;
  const int n_random = random_stick_count(state);
  for (int j = 0; j < n_random; ++j) acc += state.log1m_sticks[j];
  return -std::expm1(acc);
}

void StickMixtureModel::update_geom(State& state, Rng& rng) const {
  if (options_.truncation == StickTruncation::Sb) return;
  const double p = geom_success_prob(state);
  if (p >= 1.0) {
    std::fill(state.geom.begin(), state.geom.end(), 0L);
    return;
  }
  for (auto& z : state.geom) z = rng.geometric(p);
}

std::pair<double, double> StickMixtureModel::stick_conditional(const State& state,
                                                               int j) const {
  const measures::BetaStickParams params = stick_params(state);
  long n_here = 0, n_above = 0;
  for (int s : state.alloc) {
    if (s == j) ++n_here;
    if (s > j) ++n_above;
  }
  double a_star = params.shape_a(j + 1) + static_cast<double>(n_here);
  double b_star = params.shape_b(j + 1) + static_cast<double>(n_above);
  if (options_.truncation == StickTruncation::Rsb) {
    long z_sum = 0;
    for (long z : state.geom) z_sum += z;
    b_star += static_cast<double>(z_sum);
  }
  return {a_star, b_star};
}

void StickMixtureModel::update_sticks(State& state, Rng& rng) const {
  const int n_random = random_stick_count(state);
  for (int j = 0; j < n_random; ++j) {
    const auto [a_star, b_star] = stick_conditional(state, j);
    const auto [v, l] = rng.beta_with_log1m(a_star, b_star);
    state.set_stick(j, v, l);
  }
  state.cache_valid = false;
}

void StickMixtureModel::update_atoms(State& state, Rng& rng) const {
  const std::size_t n_atoms = state.sticks.size();
  std::vector<std::vector<double>> members(n_atoms);
  for (std::size_t i = 0; i < data_.size(); ++i)
    members[state.alloc[i]].push_back(data_[i]);
  for (std::size_t j = 0; j < n_atoms; ++j)
    normal_gamma_atom_update(members[j], hyper_, state.mu[j], state.var[j],
                             options_.fixed_var, rng);
  state.cache_valid = false;
}

std::pair<double, double> StickMixtureModel::mass_conditional(const State& state) const {
  const int n_random = random_stick_count(state);
  double sum_log = 0.0;
  for (int j = 0; j < n_random; ++j) sum_log += state.log1m_sticks[j];
  return {1.0 + static_cast<double>(n_random), 1.0 - sum_log};
}

void StickMixtureModel::update_mass(State& state, Rng& rng) const {
  if (options_.mass_prior != MassPrior::UnitExponential) return;
  const auto [shape, rate] = mass_conditional(state);
  state.mass = rng.gamma(shape, rate);
}

double StickMixtureModel::log_stick_hyper_target(const State& state,
                                                 double discount,
                                                 double mass) const {
  if (!(mass > 0.0) || !(discount >= 0.0) || !(discount < 1.0))
    return -std::numeric_limits<double>::infinity();
  const bool py =
      options_.stick.kind == measures::BetaStickParams::Kind::PoissonDirichlet;
  const int n_random = random_stick_count(state);
  double ll = 0.0;
  for (int j = 0; j < n_random; ++j) {
    const double a = py ? 1.0 - discount : 1.0;
    const double b = py ? mass + discount * (j + 1) : mass;
    if (!(a > 0.0) || !(b > 0.0)) return -std::numeric_limits<double>::infinity();
    const double log_v =
        log_stick_value(state.sticks[j], state.log1m_sticks[j]);
    ll += (a - 1.0) * log_v + (b - 1.0) * state.log1m_sticks[j] -
          log_beta_fn(a, b);
  }
  if (options_.mass_prior == MassPrior::UnitExponential) ll -= mass;
  // discount prior is U(0,1): constant inside the support
  return ll;
}

void StickMixtureModel::update_py_params(State& state, Rng& rng) const {
  if (options_.infer_discount) {
    const auto result = amh::mh_step(
        state.discount,
        [&](double a) { return log_stick_hyper_target(state, a, state.mass); },
        amh::Transform::Logit, state.discount_scale, rng);
    state.discount = result.value;
  }
  if (options_.mass_prior == MassPrior::UnitExponential) {
    const auto result = amh::mh_step(
        state.mass,
        [&](double m) { return log_stick_hyper_target(state, state.discount, m); },
        amh::Transform::Log, state.mass_scale, rng);
    state.mass = result.value;
  }
}

void StickMixtureModel::sweep(State& state, Rng& rng) const {
  update_alloc(state, rng);
  update_geom(state, rng);
  update_sticks(state, rng);
  update_atoms(state, rng);
  if (options_.stick.kind == measures::BetaStickParams::Kind::PoissonDirichlet ||
      options_.infer_discount) {
    update_py_params(state, rng);
  } else {
    update_mass(state, rng);
  }
  state.cache_valid = false;
}

void StickMixtureModel::extend(State& state, Rng& rng) const {
  const measures::BetaStickParams params = stick_params(state);
  const int old_n = static_cast<int>(state.sticks.size());
  double mu_new, var_new;
  normal_gamma_atom_update({}, hyper_, mu_new, var_new, options_.fixed_var, rng);
  if (options_.truncation == StickTruncation::Rsb) {
    const auto [v, l] = rng.beta_with_log1m(params.shape_a(old_n + 1),
                                            params.shape_b(old_n + 1));
    if (state.cache_valid) {
      const double log_raw = log_stick_value(v, l) + state.sum_log1mv;
      for (std::size_t i = 0; i < data_.size(); ++i)
        state.log_mix[i] = log_add_exp(
            state.log_mix[i], log_raw + norm_logpdf(data_[i], mu_new, var_new));
      state.sum_log1mv += l;
      state.log_norm = log1m_exp(state.sum_log1mv);
    }
    state.push_stick(v, l);
  } else {
    // SB: the pinned stick becomes a fresh Be(a_N, b_N) draw, the new final
    // stick is pinned at one.
    const auto [v, l] =
        rng.beta_with_log1m(params.shape_a(old_n), params.shape_b(old_n));
    state.set_stick(old_n - 1, v, l);
    state.push_stick(1.0, -std::numeric_limits<double>::infinity());
    state.cache_valid = false;
  }
  state.mu.push_back(mu_new);
  state.var.push_back(var_new);
}

double StickMixtureModel::predictive_density(const State& state, double x) const {
  const std::vector<double> w = weights(state);
  double d = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j)
    d += w[j] * norm_pdf(x, state.mu[j], state.var[j]);
  return d;
}

std::vector<double> StickMixtureModel::density_grid(
    const State& state, std::span<const double> grid) const {
  const std::vector<double> w = weights(state);
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double mu = state.mu[j];
    const double var = state.var[j];
    for (std::size_t g = 0; g < grid.size(); ++g)
      out[g] += w[j] * norm_pdf(grid[g], mu, var);
  }
  return out;
}

FkMixtureModel::FkMixtureModel(std::vector<double> data, NormalMixtureHyper hyper,
                               double initial_mass, MassPrior mass_prior,
                               int initial_atoms, std::optional<double> fixed_var)
    : data_(std::move(data)),
      hyper_(hyper),
      initial_mass_(initial_mass),
      mass_prior_(mass_prior),
      initial_atoms_(initial_atoms),
      fixed_var_(fixed_var) {
  // empty data is allowed: the sampler then targets the FK prior
  if (!(initial_mass > 0.0) || initial_atoms < 1)
    throw std::invalid_argument("FkMixtureModel: bad parameters");
}

FkMixtureModel::State FkMixtureModel::initial_state(Rng& rng) const {
  State state;
  state.mass = mass_prior_ == MassPrior::UnitExponential ? rng.exponential(1.0)
                                                         : initial_mass_;
  std::vector<double> arrivals(initial_atoms_);
  double t = 0.0;
  for (int j = 0; j < initial_atoms_; ++j) {
    t += rng.exponential(1.0);
    arrivals[j] = t;
  }
  const measures::GammaProcessLevy levy(state.mass);
  state.jumps = measures::fk_jumps(levy, arrivals);
  state.mu.resize(initial_atoms_);
  state.var.resize(initial_atoms_);
  for (int j = 0; j < initial_atoms_; ++j)
    normal_gamma_atom_update({}, hyper_, state.mu[j], state.var[j], fixed_var_, rng);
  state.jump_scales.assign(initial_atoms_, amh::AdaptiveScale{});
  double total = 0.0;
  for (double j : state.jumps) total += j;
  state.alloc.resize(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    double u = rng.uniform_pos() * total;
    double acc = 0.0;
    int pick = initial_atoms_ - 1;
    for (int j = 0; j < initial_atoms_; ++j) {
      acc += state.jumps[j];
      if (u <= acc) {
        pick = j;
        break;
      }
    }
    state.alloc[i] = pick;
  }
  state.cache_valid = false;
  return state;
}

void FkMixtureModel::refresh_cache(State& state) const {
  const std::size_t n = data_.size();
  const std::size_t n_atoms = state.jumps.size();
  state.log_mix.assign(n, -std::numeric_limits<double>::infinity());
  state.sum_jumps = 0.0;
  for (double j : state.jumps) state.sum_jumps += j;
  for (std::size_t i = 0; i < n; ++i) {
    double lm = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_atoms; ++j)
      lm = log_add_exp(lm, std::log(state.jumps[j]) +
                               norm_logpdf(data_[i], state.mu[j], state.var[j]));
    state.log_mix[i] = lm;
  }
  state.cache_valid = true;
}

double FkMixtureModel::loglik(State& state) const {
  if (!state.cache_valid) refresh_cache(state);
  double s = 0.0;
  for (double lm : state.log_mix) s += lm;
  return s - static_cast<double>(data_.size()) * std::log(state.sum_jumps);
}

std::vector<double> FkMixtureModel::alloc_log_mass(const State& state, int i) const {
  std::vector<double> lm(state.jumps.size());
  for (std::size_t j = 0; j < state.jumps.size(); ++j)
    lm[j] = std::log(state.jumps[j]) +
            norm_logpdf(data_[i], state.mu[j], state.var[j]);
  return lm;
}

void FkMixtureModel::update_alloc(State& state, Rng& rng) const {
  for (std::size_t i = 0; i < data_.size(); ++i)
    state.alloc[i] = sample_categorical_log(alloc_log_mass(state, i), rng);
  state.cache_valid = false;
}

void FkMixtureModel::update_atoms(State& state, Rng& rng) const {
  std::vector<std::vector<double>> members(state.jumps.size());
  for (std::size_t i = 0; i < data_.size(); ++i)
    members[state.alloc[i]].push_back(data_[i]);
  for (std::size_t j = 0; j < state.jumps.size(); ++j)
    normal_gamma_atom_update(members[j], hyper_, state.mu[j], state.var[j],
                             fixed_var_, rng);
  state.cache_valid = false;
}

double FkMixtureModel::jump_log_target(const State& state, int j, double x) const {
  const int n_atoms = static_cast<int>(state.jumps.size());
  const double upper = j == 0 ? std::numeric_limits<double>::infinity()
                              : state.jumps[j - 1];
  const double lower = j == n_atoms - 1 ? 0.0 : state.jumps[j + 1];
  if (!(x > lower) || !(x < upper))
    return -std::numeric_limits<double>::infinity();
  long n_here = 0;
  for (int s : state.alloc)
    if (s == j) ++n_here;
  double total = 0.0;
  for (int l = 0; l < n_atoms; ++l) total += l == j ? x : state.jumps[l];
  double lt = std::log(state.mass) - std::log(x) - x;  // log eta_M(x)
  lt += static_cast<double>(n_here) * std::log(x);
  lt -= static_cast<double>(data_.size()) * std::log(total);
  if (j == n_atoms - 1) {
    const measures::GammaProcessLevy unit(1.0);
    lt -= state.mass * unit.tail_mass(x);
  }
  return lt;
}

void FkMixtureModel::update_jumps(State& state, Rng& rng) const {
  for (std::size_t j = 0; j < state.jumps.size(); ++j) {
    const auto result = amh::mh_step(
        state.jumps[j],
        [&](double x) { return jump_log_target(state, static_cast<int>(j), x); },
        amh::Transform::Log, state.jump_scales[j], rng);
    state.jumps[j] = result.value;
  }
  state.cache_valid = false;
}

std::pair<double, double> FkMixtureModel::mass_conditional(const State& state) const {
  const measures::GammaProcessLevy unit(1.0);
  const double shape = 1.0 + static_cast<double>(state.jumps.size());
  const double rate = 1.0 + unit.tail_mass(state.jumps.back());
  return {shape, rate};
}

void FkMixtureModel::update_mass(State& state, Rng& rng) const {
  if (mass_prior_ != MassPrior::UnitExponential) return;
  const auto [shape, rate] = mass_conditional(state);
  state.mass = rng.gamma(shape, rate);
}

void FkMixtureModel::sweep(State& state, Rng& rng) const {
  update_alloc(state, rng);
  update_atoms(state, rng);
  update_jumps(state, rng);
  update_mass(state, rng);
  state.cache_valid = false;
}

void FkMixtureModel::extend(State& state, Rng& rng) const {
  const measures::GammaProcessLevy levy(state.mass);
  const double next = measures::fk_extend(levy, state.jumps.back(), rng);
  double mu_new, var_new;
  normal_gamma_atom_update({}, hyper_, mu_new, var_new, fixed_var_, rng);
  if (state.cache_valid) {
    for (std::size_t i = 0; i < data_.size(); ++i)
      state.log_mix[i] =
          log_add_exp(state.log_mix[i],
                      std::log(next) + norm_logpdf(data_[i], mu_new, var_new));
    state.sum_jumps += next;
  }
  state.jumps.push_back(next);
  state.mu.push_back(mu_new);
  state.var.push_back(var_new);
  state.jump_scales.push_back(amh::AdaptiveScale{});
}

double FkMixtureModel::predictive_density(const State& state, double x) const {
  double total = 0.0;
  for (double j : state.jumps) total += j;
  double d = 0.0;
  for (std::size_t j = 0; j < state.jumps.size(); ++j)
    d += state.jumps[j] / total * norm_pdf(x, state.mu[j], state.var[j]);
  return d;
}

std::vector<double> FkMixtureModel::density_grid(const State& state,
                                                 std::span<const double> grid) const {
  double total = 0.0;
  for (double j : state.jumps) total += j;
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t j = 0; j < state.jumps.size(); ++j) {
    const double w = state.jumps[j] / total;
    for (std::size_t g = 0; g < grid.size(); ++g)
      out[g] += w * norm_pdf(grid[g], state.mu[j], state.var[j]);
  }
  return out;
}

double mise(const std::vector<std::vector<double>>& run_densities,
            std::span<const double> reference, std::span<const double> grid) {
  if (run_densities.empty()) throw std::invalid_argument("mise: no runs");
  double acc = 0.0;
  for (const auto& f : run_densities) {
    if (f.size() != reference.size() || f.size() != grid.size())
      throw std::invalid_argument("mise: grid mismatch");
    std::vector<double> sq(f.size());
    for (std::size_t g = 0; g < f.size(); ++g) {
      const double d = f[g] - reference[g];
      sq[g] = d * d;
    }
    acc += trapezoid(grid, sq);
  }
  return acc / static_cast<double>(run_densities.size());
}

}  // namespace atsmc::dpm
