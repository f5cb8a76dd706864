#include "atsmc/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "atsmc/numeric.hpp"

namespace atsmc::lmm {

namespace {
double clamp_unit(double v) { return std::clamp(v, 1e-12, 1.0 - 1e-12); }

double log_stick_value(double value, double log1m) {
  return log1m < -1e-9 ? atsmc::log1m_exp(log1m) : std::log(value);
}
}  // namespace

void LmmData::validate() const {
  if (n < 1 || periods < 1 || p < 1)
    throw std::invalid_argument("LmmData: empty panel");
  if (y.size() != static_cast<std::size_t>(n * periods) ||
      X.size() != static_cast<std::size_t>(n * periods * p))
    throw std::invalid_argument("LmmData: ragged panel");
}

std::vector<double> LmmBlock::weights() const {
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

double LmmBlock::weighted_mean() const {
  const std::vector<double> w = weights();
  double m = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) m += w[j] * mu[j];
  return m;
}

double LmmBlock::sum_log1m() const {
  double acc = 0.0;
  for (double l : log1m_sticks) acc += l;
  return acc;
}

void LmmBlock::sync_stick_logs() {
  log1m_sticks.resize(sticks.size());
  for (std::size_t j = 0; j < sticks.size(); ++j)
    log1m_sticks[j] = std::log1p(-sticks[j]);
}

LmmModel::LmmModel(LmmData data, LmmPriors priors, int initial_atoms)
    : data_(std::move(data)), priors_(priors), initial_atoms_(initial_atoms) {
  data_.validate();
  if (initial_atoms_ < 1) throw std::invalid_argument("LmmModel: initial atoms >= 1");
}

LmmModel::State LmmModel::initial_state(Rng& rng) const {
  State state;
  state.beta.assign(data_.p, 0.0);
  for (Block b : {Block::Eps, Block::Gam}) {
    LmmBlock& blk = b == Block::Eps ? state.eps : state.gam;
    const FoldedT& ft = b == Block::Eps ? priors_.s2_eps : priors_.s2_gam;
    blk.mass = rng.gamma(priors_.mass_shape, priors_.mass_rate);
    blk.smooth = clamp_unit(rng.beta(priors_.smooth_be_a, priors_.smooth_be_b));
    blk.sigma2 = ft.upper ? ft.sample(rng) : 1.0;
    for (int j = 0; j < initial_atoms_; ++j) {
      const auto [v, l] = rng.beta_with_log1m(1.0, blk.mass);
      blk.push_stick(v, l);
      blk.mu.push_back(rng.normal(0.0, std::sqrt(blk.centring_var())));
    }
    blk.mu_scales.assign(initial_atoms_, amh::AdaptiveScale{});
    blk.stick_scales.assign(initial_atoms_, amh::AdaptiveScale{});
  }
  const std::vector<double> we = state.eps.weights();
  const std::vector<double> wg = state.gam.weights();
  auto draw_from = [&](const std::vector<double>& w) {
    double u = rng.uniform_pos();
    double acc = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      acc += w[j];
      if (u <= acc) return static_cast<int>(j);
    }
    return static_cast<int>(w.size()) - 1;
  };
  state.alloc_eps.resize(data_.n * data_.periods);
  for (auto& s : state.alloc_eps) s = draw_from(we);
  state.alloc_gam.resize(data_.n);
  for (auto& s : state.alloc_gam) s = draw_from(wg);
  return state;
}

double LmmModel::collapsed_loglik(const State& state) const {
  const int n = data_.n, T = data_.periods;
  const double veps = state.eps.cell_var();
  const double vgam = state.gam.cell_var();
  if (!(veps > 0.0) || !(vgam > 0.0))
    return -std::numeric_limits<double>::infinity();
  const double mubar_e = state.eps.weighted_mean();
  const double mubar_g = state.gam.weighted_mean();
  const double d = T / veps + 1.0 / vgam;
  double ll = n * (-0.5 * T * (kLogTwoPi + std::log(veps)) -
                   0.5 * std::log(vgam * d));
  for (int i = 0; i < n; ++i) {
    double sum_d = 0.0, sum_d2 = 0.0;
    for (int t = 0; t < T; ++t) {
      double xb = 0.0;
      for (int k = 0; k < data_.p; ++k)
        xb += data_.reg(i, t, k) * state.beta[k];
      const double dit = data_.response(i, t) - xb -
                         state.eps.mu[state.alloc_eps[i * T + t]] + mubar_e;
      sum_d += dit;
      sum_d2 += dit * dit;
    }
    const double dg = state.gam.mu[state.alloc_gam[i]] - mubar_g;
    const double c = sum_d / veps + dg / vgam;
    ll += -0.5 * (sum_d2 / veps + dg * dg / vgam - c * c / d);
  }
  return ll;
}

double LmmModel::allocation_log_prior(const State& state, Block b) const {
  const LmmBlock& blk = block(state, b);
  const std::vector<double> w = blk.weights();
  std::vector<long> counts(w.size(), 0);
  if (b == Block::Eps) {
    for (int s : state.alloc_eps) counts[s] += 1;
  } else {
    for (int s : state.alloc_gam) counts[s] += 1;
  }
  double lp = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j)
    if (counts[j] > 0) lp += counts[j] * std::log(w[j]);
  return lp;
}

double LmmModel::log_target_atom_mean(State& state, Block b, int j,
                                      double value) const {
  LmmBlock& blk = block(state, b);
  const double old = blk.mu[j];
  blk.mu[j] = value;
  const double lt = collapsed_loglik(state) +
                    norm_logpdf(value, 0.0, blk.centring_var());
  blk.mu[j] = old;
  return lt;
}

double LmmModel::log_target_stick(State& state, Block b, int j,
                                  double value) const {
  if (!(value > 0.0) || !(value < 1.0))
    return -std::numeric_limits<double>::infinity();
  return stick_target_pair(state, b, j, value, std::log1p(-value));
}

double LmmModel::stick_target_pair(State& state, Block b, int j, double value,
                                   double log1m) const {
  LmmBlock& blk = block(state, b);
  const double old_v = blk.sticks[j];
  const double old_l = blk.log1m_sticks[j];
  blk.set_stick(j, value, log1m);
  const double lt = collapsed_loglik(state) + allocation_log_prior(state, b) +
                    (blk.mass - 1.0) * log1m;
  blk.set_stick(j, old_v, old_l);
  return lt;
}

double LmmModel::stick_nonprior_pair(State& state, Block b, int j, double value,
                                     double log1m) const {
  LmmBlock& blk = block(state, b);
  const double old_v = blk.sticks[j];
  const double old_l = blk.log1m_sticks[j];
  blk.set_stick(j, value, log1m);
  const double lt = collapsed_loglik(state) + allocation_log_prior(state, b);
  blk.set_stick(j, old_v, old_l);
  return lt;
}

double LmmModel::log_target_smooth(State& state, Block b, double value) const {
  if (!(value > 0.0) || !(value < 1.0))
    return -std::numeric_limits<double>::infinity();
  LmmBlock& blk = block(state, b);
  const double old = blk.smooth;
  blk.smooth = value;
  double lt = collapsed_loglik(state) +
              beta_logpdf(value, priors_.smooth_be_a, priors_.smooth_be_b);
  for (double m : blk.mu) lt += norm_logpdf(m, 0.0, blk.centring_var());
  blk.smooth = old;
  return lt;
}

double LmmModel::log_target_sigma2(State& state, Block b, double value) const {
  if (!(value > 0.0)) return -std::numeric_limits<double>::infinity();
  LmmBlock& blk = block(state, b);
  const FoldedT& ft = b == Block::Eps ? priors_.s2_eps : priors_.s2_gam;
  const double old = blk.sigma2;
  blk.sigma2 = value;
  double lt = collapsed_loglik(state) + ft.logpdf(value);
  for (double m : blk.mu) lt += norm_logpdf(m, 0.0, blk.centring_var());
  blk.sigma2 = old;
  return lt;
}

std::pair<double, double> LmmModel::mass_conditional(const State& state,
                                                     Block b) const {
  const LmmBlock& blk = block(state, b);
  return {priors_.mass_shape + static_cast<double>(blk.sticks.size()),
          priors_.mass_rate - blk.sum_log1m()};
}

void LmmModel::update_atom_means(State& state, Block b, Rng& rng) const {
  LmmBlock& blk = block(state, b);
  for (std::size_t j = 0; j < blk.mu.size(); ++j) {
    const auto res = amh::mh_step(
        blk.mu[j],
        [&](double v) { return log_target_atom_mean(state, b, static_cast<int>(j), v); },
        amh::Transform::Identity, blk.mu_scales[j], rng);
    blk.mu[j] = res.value;
    // independence move from the centring prior (prior factor cancels)
    const double prop = rng.normal(0.0, std::sqrt(blk.centring_var()));
    const double old = blk.mu[j];
    const double ll_old = collapsed_loglik(state);
    blk.mu[j] = prop;
    const double ll_prop = collapsed_loglik(state);
    if (!(std::log(rng.uniform_pos()) < ll_prop - ll_old)) blk.mu[j] = old;
  }
}

void LmmModel::update_sticks(State& state, Block b, Rng& rng) const {
  LmmBlock& blk = block(state, b);
  for (std::size_t j = 0; j < blk.sticks.size(); ++j) {
    // random walk on the logit scale, carrying the exact complement
    const auto res = amh::mh_step_logit_pair(
        {blk.sticks[j], blk.log1m_sticks[j]},
        [&](double v, double l) {
          return stick_target_pair(state, b, static_cast<int>(j), v, l);
        },
        blk.stick_scales[j], rng);
    blk.set_stick(j, res.value, res.log1m);
    // independence move proposing from the conditional prior Be(1, M); the
    // prior factor cancels, so only the collapsed-likelihood and allocation
    // parts enter the ratio. This traverses the small-mass corner that a
    // random walk cannot reach.
    const auto [pv, pl] = rng.beta_with_log1m(1.0, blk.mass);
    const double lr =
        stick_nonprior_pair(state, b, static_cast<int>(j), pv, pl) -
        stick_nonprior_pair(state, b, static_cast<int>(j), blk.sticks[j],
                            blk.log1m_sticks[j]);
    if (std::log(rng.uniform_pos()) < lr) blk.set_stick(j, pv, pl);
  }
}

void LmmModel::update_mass(State& state, Block b, Rng& rng) const {
  LmmBlock& blk = block(state, b);
  const auto [shape, rate] = mass_conditional(state, b);
  blk.mass = rng.gamma(shape, rate);
}

void LmmModel::update_smooth(State& state, Block b, Rng& rng) const {
  LmmBlock& blk = block(state, b);
  const auto res = amh::mh_step(
      blk.smooth, [&](double v) { return log_target_smooth(state, b, v); },
      amh::Transform::Logit, blk.smooth_scale, rng);
  blk.smooth = clamp_unit(res.value);
}

void LmmModel::update_sigma2(State& state, Block b, Rng& rng) const {
  LmmBlock& blk = block(state, b);
  const auto res = amh::mh_step(
      blk.sigma2, [&](double v) { return log_target_sigma2(state, b, v); },
      amh::Transform::Log, blk.s2_scale, rng);
  blk.sigma2 = res.value;
}

std::vector<double> LmmModel::alloc_eps_log_mass(const State& state, int i,
                                                 int t) const {
  const int T = data_.periods;
  const double veps = state.eps.cell_var();
  const double vgam = state.gam.cell_var();
  const double mubar_e = state.eps.weighted_mean();
  const double mubar_g = state.gam.weighted_mean();
  const double d = T / veps + 1.0 / vgam;
  const std::vector<double> w = state.eps.weights();

  double xb = 0.0;
  for (int k = 0; k < data_.p; ++k) xb += data_.reg(i, t, k) * state.beta[k];
  const double r_it = data_.response(i, t) - xb;

  // residual sum over the other occasions, at the current allocations
  double sum_other = 0.0;
  for (int l = 0; l < T; ++l) {
    if (l == t) continue;
    double xbl = 0.0;
    for (int k = 0; k < data_.p; ++k) xbl += data_.reg(i, l, k) * state.beta[k];
    sum_other += data_.response(i, l) - xbl -
                 state.eps.mu[state.alloc_eps[i * T + l]] + mubar_e;
  }
  const double dg = state.gam.mu[state.alloc_gam[i]] - mubar_g;

  std::vector<double> lm(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double d_new = r_it - state.eps.mu[j] + mubar_e;
    const double c = (sum_other + d_new) / veps + dg / vgam;
    lm[j] = std::log(w[j]) - 0.5 * (d_new * d_new / veps - c * c / d);
  }
  return lm;
}

void LmmModel::update_alloc_eps(State& state, Rng& rng) const {
  const int T = data_.periods;
  for (int i = 0; i < data_.n; ++i)
    for (int t = 0; t < T; ++t) {
      const std::vector<double> lm = alloc_eps_log_mass(state, i, t);
      double u = rng.uniform_pos();
      const double lse = log_sum_exp(lm);
      double acc = 0.0;
      int pick = static_cast<int>(lm.size()) - 1;
      for (std::size_t j = 0; j < lm.size(); ++j) {
        acc += std::exp(lm[j] - lse);
        if (u <= acc) {
          pick = static_cast<int>(j);
          break;
        }
      }
      state.alloc_eps[i * T + t] = pick;
    }
}

std::vector<double> LmmModel::alloc_gam_log_mass(const State& state, int i) const {
  const int T = data_.periods;
  const double veps = state.eps.cell_var();
  const double vgam = state.gam.cell_var();
  const double mubar_e = state.eps.weighted_mean();
  const double mubar_g = state.gam.weighted_mean();
  const double d = T / veps + 1.0 / vgam;
  const std::vector<double> w = state.gam.weights();

  double sum_d = 0.0;
  for (int t = 0; t < T; ++t) {
    double xb = 0.0;
    for (int k = 0; k < data_.p; ++k) xb += data_.reg(i, t, k) * state.beta[k];
    sum_d += data_.response(i, t) - xb -
             state.eps.mu[state.alloc_eps[i * T + t]] + mubar_e;
  }
  std::vector<double> lm(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double dg = state.gam.mu[j] - mubar_g;
    const double c = sum_d / veps + dg / vgam;
    lm[j] = std::log(w[j]) - 0.5 * (dg * dg / vgam - c * c / d);
  }
  return lm;
}

void LmmModel::update_alloc_gam(State& state, Rng& rng) const {
  for (int i = 0; i < data_.n; ++i) {
    const std::vector<double> lm = alloc_gam_log_mass(state, i);
    const double lse = log_sum_exp(lm);
    double u = rng.uniform_pos();
    double acc = 0.0;
    int pick = static_cast<int>(lm.size()) - 1;
    for (std::size_t j = 0; j < lm.size(); ++j) {
      acc += std::exp(lm[j] - lse);
      if (u <= acc) {
        pick = static_cast<int>(j);
        break;
      }
    }
    state.alloc_gam[i] = pick;
  }
}

void LmmModel::update_beta(State& state, Rng& rng) const {
  const int n = data_.n, T = data_.periods, p = data_.p;
  const double veps = state.eps.cell_var();
  const double vgam = state.gam.cell_var();
  const double mubar_e = state.eps.weighted_mean();
  const double mubar_g = state.gam.weighted_mean();
  const double d = T / veps + 1.0 / vgam;

  // Auxiliary random effects gamma_i ~ N(c_i/d, 1/d).
  std::vector<double> gamma(n);
  for (int i = 0; i < n; ++i) {
    double sum_d = 0.0;
    for (int t = 0; t < T; ++t) {
      double xb = 0.0;
      for (int k = 0; k < p; ++k) xb += data_.reg(i, t, k) * state.beta[k];
      sum_d += data_.response(i, t) - xb -
               state.eps.mu[state.alloc_eps[i * T + t]] + mubar_e;
    }
    const double dg = state.gam.mu[state.alloc_gam[i]] - mubar_g;
    const double c = sum_d / veps + dg / vgam;
    gamma[i] = rng.normal(c / d, std::sqrt(1.0 / d));
  }

  std::vector<double> prec(p * p, 0.0);
  std::vector<double> lin(p, 0.0);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t) {
      const double resid = data_.response(i, t) - gamma[i] -
                           state.eps.mu[state.alloc_eps[i * T + t]] + mubar_e;
      for (int k = 0; k < p; ++k) {
        const double xk = data_.reg(i, t, k);
        lin[k] += xk * resid / veps;
        for (int l = 0; l < p; ++l)
          prec[k * p + l] += xk * data_.reg(i, t, l) / veps;
      }
    }
  for (int k = 0; k < p; ++k) prec[k * p + k] += 1.0 / priors_.beta_var;

  const std::vector<double> lower = cholesky(prec, p);
  const std::vector<double> mean = cholesky_solve(lower, lin, p);
  std::vector<double> z(p);
  for (int k = 0; k < p; ++k) z[k] = rng.normal();
  const std::vector<double> noise = cholesky_solve_lt(lower, z, p);
  for (int k = 0; k < p; ++k) state.beta[k] = mean[k] + noise[k];
}

void LmmModel::sweep(State& state, Rng& rng) const {
  update_atom_means(state, Block::Eps, rng);
  update_sticks(state, Block::Eps, rng);
  update_mass(state, Block::Eps, rng);
  update_smooth(state, Block::Eps, rng);
  update_sigma2(state, Block::Eps, rng);
  update_atom_means(state, Block::Gam, rng);
  update_sticks(state, Block::Gam, rng);
  update_mass(state, Block::Gam, rng);
  update_smooth(state, Block::Gam, rng);
  update_sigma2(state, Block::Gam, rng);
  update_alloc_eps(state, rng);
  update_alloc_gam(state, rng);
  update_beta(state, rng);
}

double LmmModel::retention_probability(const LmmBlock& block) {
  const double a = -std::expm1(block.sum_log1m());  // 1 - prod(1-V)
  const double p_new = block.weights().back();
  return a / (a + p_new);
}

void LmmModel::extend(State& state, Rng& rng) const {
  for (Block b : {Block::Eps, Block::Gam}) {
    LmmBlock& blk = block(state, b);
    const auto [v, l] = rng.beta_with_log1m(1.0, blk.mass);
    blk.push_stick(v, l);
    blk.mu.push_back(rng.normal(0.0, std::sqrt(blk.centring_var())));
    blk.mu_scales.push_back(amh::AdaptiveScale{});
    blk.stick_scales.push_back(amh::AdaptiveScale{});
  }
  const int new_eps = static_cast<int>(state.eps.sticks.size()) - 1;
  const int new_gam = static_cast<int>(state.gam.sticks.size()) - 1;
  const double r_eps = retention_probability(state.eps);
  const double r_gam = retention_probability(state.gam);
  for (auto& s : state.alloc_eps)
    if (rng.uniform() < 1.0 - r_eps) s = new_eps;
  for (auto& s : state.alloc_gam)
    if (rng.uniform() < 1.0 - r_gam) s = new_gam;
}

LmmData schoolgirl_design(const std::vector<int>& subject,
                          const std::vector<double>& age,
                          const std::vector<double>& height,
                          const std::vector<int>& group) {
  const std::size_t rows = subject.size();
  if (age.size() != rows || height.size() != rows || group.size() != rows)
    throw std::invalid_argument("schoolgirl_design: column length mismatch");
  std::map<int, std::vector<std::size_t>> by_subject;
  for (std::size_t r = 0; r < rows; ++r) by_subject[subject[r]].push_back(r);
  const int n = static_cast<int>(by_subject.size());
  const int T = static_cast<int>(by_subject.begin()->second.size());
  for (const auto& [id, rws] : by_subject)
    if (static_cast<int>(rws.size()) != T)
      throw std::invalid_argument("schoolgirl_design: unbalanced panel");
  LmmData data;
  data.n = n;
  data.periods = T;
  data.p = 4;  // three group dummies plus age
  data.y.resize(n * T);
  data.X.assign(n * T * 4, 0.0);
  int i = 0;
  for (const auto& [id, rws] : by_subject) {
    std::vector<std::size_t> ordered = rws;
    std::sort(ordered.begin(), ordered.end(),
              [&](std::size_t a, std::size_t b) { return age[a] < age[b]; });
    for (int t = 0; t < T; ++t) {
      const std::size_t r = ordered[t];
      data.y[i * T + t] = height[r];
      const int g = group[r];
      if (g < 1 || g > 3)
        throw std::invalid_argument("schoolgirl_design: group must be 1..3");
      data.X[(i * T + t) * 4 + (g - 1)] = 1.0;
      data.X[(i * T + t) * 4 + 3] = age[r];
    }
    ++i;
  }
  return data;
}

LmmSummaries lmm_summaries(const LmmModel& model,
                           const smc::ParticleSystem<LmmState>& system,
                           std::span<const double> grid,
                           std::span<const double> beta_grid) {
  LmmSummaries out;
  out.grid.assign(grid.begin(), grid.end());
  out.beta_grid.assign(beta_grid.begin(), beta_grid.end());
  out.f_eps.assign(grid.size(), 0.0);
  out.f_gam.assign(grid.size(), 0.0);
  const int p = model.data().p;
  out.beta_mean.assign(p, 0.0);
  out.beta_sd.assign(p, 0.0);
  out.beta_q025.assign(p, 0.0);
  out.beta_q50.assign(p, 0.0);
  out.beta_q975.assign(p, 0.0);
  out.beta_density.assign(p, std::vector<double>(beta_grid.size(), 0.0));

  const std::vector<double> w = system.weights();
  for (std::size_t j = 0; j < system.size(); ++j) {
    const LmmState& s = system.particles[j];
    for (const auto* blkp : {&s.eps, &s.gam}) {
      const LmmBlock& blk = *blkp;
      const std::vector<double> bw = blk.weights();
      const double mubar = blk.weighted_mean();
      std::vector<double>& dest = blkp == &s.eps ? out.f_eps : out.f_gam;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        double d = 0.0;
        for (std::size_t a = 0; a < bw.size(); ++a)
          d += bw[a] * norm_pdf(grid[g], blk.mu[a] - mubar, blk.cell_var());
        dest[g] += w[j] * d;
      }
    }
    for (int k = 0; k < p; ++k) out.beta_mean[k] += w[j] * s.beta[k];
  }
  const double n_eff = smc::ess_log(system.log_weights);
  for (int k = 0; k < p; ++k) {
    std::vector<double> vals(system.size());
    for (std::size_t j = 0; j < system.size(); ++j)
      vals[j] = system.particles[j].beta[k];
    double var = 0.0;
    for (std::size_t j = 0; j < system.size(); ++j) {
      const double dd = vals[j] - out.beta_mean[k];
      var += w[j] * dd * dd;
    }
    out.beta_sd[k] = std::sqrt(var);
    out.beta_q025[k] = weighted_quantile(vals, w, 0.025);
    out.beta_q50[k] = weighted_quantile(vals, w, 0.5);
    out.beta_q975[k] = weighted_quantile(vals, w, 0.975);
    const double bw_kde =
        1.06 * std::max(out.beta_sd[k], 1e-12) * std::pow(n_eff, -0.2);
    for (std::size_t g = 0; g < beta_grid.size(); ++g) {
      double d = 0.0;
      for (std::size_t j = 0; j < system.size(); ++j)
        d += w[j] * norm_pdf(beta_grid[g], vals[j], bw_kde * bw_kde);
      out.beta_density[k][g] = d;
    }
  }
  return out;
}

}  // namespace atsmc::lmm
