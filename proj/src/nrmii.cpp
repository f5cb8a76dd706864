#include "atsmc/nrmii.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "atsmc/adaptive_mh.hpp"
#include "atsmc/numeric.hpp"

namespace atsmc::nrmii {

CppMixtureModel::CppMixtureModel(std::vector<double> data,
                                 dpm::NormalMixtureHyper hyper, double mass,
                                 int initial_expected_atoms,
                                 measures::LevelScheme scheme, double xi,
                                 std::optional<double> fixed_var)
    : data_(std::move(data)),
      hyper_(hyper),
      levy_(mass),
      scheme_(scheme),
      xi_(xi),
      fixed_var_(fixed_var) {
  if (data_.empty()) throw std::invalid_argument("CppMixtureModel: no data");
  if (initial_expected_atoms < 1)
    throw std::invalid_argument("CppMixtureModel: initial atom count must be >= 1");
  // L_1 chosen so the expected initial atom count matches the requested size.
  level1_ = levy_.inverse_tail_mass(static_cast<double>(initial_expected_atoms), 0.1);
}

double CppMixtureModel::level_at(int k) const {
  return measures::cpp_level_sequence(level1_, scheme_, xi_, levy_, k);
}

CppMixtureModel::State CppMixtureModel::initial_state(Rng& rng) const {
  State state;
  state.level_index = 1;
  state.level = level1_;
  do {
    state.jumps = measures::cpp_sample(levy_, level1_, rng);
  } while (state.jumps.empty());
  const std::size_t n_atoms = state.jumps.size();
  state.mu.resize(n_atoms);
  state.var.resize(n_atoms);
  for (std::size_t j = 0; j < n_atoms; ++j)
    dpm::normal_gamma_atom_update({}, hyper_, state.mu[j], state.var[j],
                                  fixed_var_, rng);
  double total = 0.0;
  for (double j : state.jumps) total += j;
  state.alloc.resize(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    double u = rng.uniform_pos() * total;
    double acc = 0.0;
    int pick = static_cast<int>(n_atoms) - 1;
    for (std::size_t j = 0; j < n_atoms; ++j) {
      acc += state.jumps[j];
      if (u <= acc) {
        pick = static_cast<int>(j);
        break;
      }
    }
    state.alloc[i] = pick;
  }
  state.latent_v = rng.gamma(static_cast<double>(data_.size()), total);
  state.cache_valid = false;
  return state;
}

void CppMixtureModel::refresh_cache(State& state) const {
  const std::size_t n = data_.size();
  state.log_mix.assign(n, -std::numeric_limits<double>::infinity());
  state.sum_jumps = 0.0;
  for (double j : state.jumps) state.sum_jumps += j;
  for (std::size_t i = 0; i < n; ++i) {
    double lm = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < state.jumps.size(); ++j)
      lm = log_add_exp(lm, std::log(state.jumps[j]) +
                               norm_logpdf(data_[i], state.mu[j], state.var[j]));
    state.log_mix[i] = lm;
  }
  state.cache_valid = true;
}

double CppMixtureModel::loglik(State& state) const {
  if (!state.cache_valid) refresh_cache(state);
  double s = 0.0;
  for (double lm : state.log_mix) s += lm;
  return s - static_cast<double>(data_.size()) * std::log(state.sum_jumps);
}

std::pair<double, double> CppMixtureModel::occupied_jump_conditional(
    const State& state, long count) const {
  return {static_cast<double>(count), 1.0 + state.latent_v};
}

double CppMixtureModel::truncated_gamma(double shape, double rate, double lower,
                                        Rng& rng) {
  const double p_lower = boost::math::gamma_p(shape, rate * lower);
  if (p_lower < 1.0 - 1e-12) {
    const double u = p_lower + rng.uniform_pos() * (1.0 - p_lower);
    const double x = boost::math::gamma_p_inv(shape, u) / rate;
    return std::max(x, std::nextafter(lower, std::numeric_limits<double>::infinity()));
  }
  // Truncated-region mass underflow: random-walk Metropolis on log(x - lower).
  std::cerr << "atsmc: truncated gamma mass underflow (shape=" << shape
            << ", rate=" << rate << ", lower=" << lower << "); MH fallback\n";
  amh::AdaptiveScale scale;
  double x = lower * (1.0 + 1e-3);
  const auto target = [&](double v) {
    if (!(v > lower)) return -std::numeric_limits<double>::infinity();
    return (shape - 1.0) * std::log(v) - rate * v;
  };
  for (int it = 0; it < 50; ++it)
    x = amh::mh_step(x, target, amh::Transform::Log, scale, rng).value;
  return x;
}

std::vector<double> CppMixtureModel::thinned_poisson_jumps(double lower,
                                                           double upper, double v,
                                                           Rng& rng) const {
  std::vector<double> out;
  const double zeta_lo = levy_.tail_mass(lower);
  const double zeta_hi =
      std::isinf(upper) ? 0.0 : levy_.tail_mass(upper);
  const double band_mass = zeta_lo - zeta_hi;
  if (!(band_mass > 0.0)) return out;
  const long count = rng.poisson(band_mass);
  for (long i = 0; i < count; ++i) {
    const double u = rng.uniform_pos();
    const double target = zeta_hi + u * band_mass;
    const double x = levy_.inverse_tail_mass(target, lower);
    if (rng.uniform() < std::exp(-v * x)) out.push_back(x);
  }
  return out;
}

void CppMixtureModel::update_jumps_and_atoms(State& state, Rng& rng) const {
  const std::size_t n_atoms = state.jumps.size();
  std::vector<long> counts(n_atoms, 0);
  for (int s : state.alloc) counts[s] += 1;

  std::vector<double> jumps, mu, var;
  std::vector<int> remap(n_atoms, -1);
  std::vector<std::vector<double>> members(n_atoms);
  for (std::size_t i = 0; i < data_.size(); ++i)
    members[state.alloc[i]].push_back(data_[i]);

  // Occupied jumps: exact truncated-gamma draw; atoms conjugate.
  for (std::size_t j = 0; j < n_atoms; ++j) {
    if (counts[j] == 0) continue;
    const auto [shape, rate] = occupied_jump_conditional(state, counts[j]);
    remap[j] = static_cast<int>(jumps.size());
    jumps.push_back(truncated_gamma(shape, rate, state.level, rng));
    double m = state.mu[j], s2 = state.var[j];
    dpm::normal_gamma_atom_update(members[j], hyper_, m, s2, fixed_var_, rng);
    mu.push_back(m);
    var.push_back(s2);
  }
  for (auto& s : state.alloc) s = remap[s];

  // Unoccupied jumps: fresh marked Poisson draw with intensity eta(x)e^{-vx}.
  const std::vector<double> dagger = thinned_poisson_jumps(
      state.level, std::numeric_limits<double>::infinity(), state.latent_v, rng);
  for (double x : dagger) {
    jumps.push_back(x);
    double m, s2;
    dpm::normal_gamma_atom_update({}, hyper_, m, s2, fixed_var_, rng);
    mu.push_back(m);
    var.push_back(s2);
  }
  state.jumps = std::move(jumps);
  state.mu = std::move(mu);
  state.var = std::move(var);
  state.cache_valid = false;
}

std::vector<double> CppMixtureModel::alloc_log_mass(const State& state, int i) const {
  std::vector<double> lm(state.jumps.size());
  for (std::size_t j = 0; j < state.jumps.size(); ++j)
    lm[j] = std::log(state.jumps[j]) +
            norm_logpdf(data_[i], state.mu[j], state.var[j]);
  return lm;
}

void CppMixtureModel::update_alloc(State& state, Rng& rng) const {
  for (std::size_t i = 0; i < data_.size(); ++i)
    state.alloc[i] = dpm::sample_categorical_log(alloc_log_mass(state, i), rng);
  state.cache_valid = false;
}

std::pair<double, double> CppMixtureModel::v_conditional(const State& state) const {
  double total = 0.0;
  for (double j : state.jumps) total += j;
  return {static_cast<double>(data_.size()), total};
}

void CppMixtureModel::update_v(State& state, Rng& rng) const {
  const auto [shape, rate] = v_conditional(state);
  state.latent_v = rng.gamma(shape, rate);
}

void CppMixtureModel::sweep(State& state, Rng& rng) const {
  update_jumps_and_atoms(state, rng);
  update_alloc(state, rng);
  update_v(state, rng);
  state.cache_valid = false;
}

void CppMixtureModel::extend(State& state, Rng& rng) const {
  const double next_level = level_at(state.level_index + 1);
  const std::vector<double> fresh =
      thinned_poisson_jumps(next_level, state.level, state.latent_v, rng);
  if (!state.cache_valid) refresh_cache(state);
  for (double x : fresh) {
    double m, s2;
    dpm::normal_gamma_atom_update({}, hyper_, m, s2, fixed_var_, rng);
    for (std::size_t i = 0; i < data_.size(); ++i)
      state.log_mix[i] = log_add_exp(
          state.log_mix[i], std::log(x) + norm_logpdf(data_[i], m, s2));
    state.sum_jumps += x;
    state.jumps.push_back(x);
    state.mu.push_back(m);
    state.var.push_back(s2);
  }
  state.level_index += 1;
  state.level = next_level;
}

double CppMixtureModel::predictive_density(const State& state, double x) const {
  double total = 0.0;
  for (double j : state.jumps) total += j;
  double d = 0.0;
  for (std::size_t j = 0; j < state.jumps.size(); ++j)
    d += state.jumps[j] / total * norm_pdf(x, state.mu[j], state.var[j]);
  return d;
}

std::vector<double> CppMixtureModel::density_grid(const State& state,
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

}  // namespace atsmc::nrmii
