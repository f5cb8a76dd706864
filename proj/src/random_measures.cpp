#include "atsmc/random_measures.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "atsmc/numeric.hpp"

namespace atsmc::measures {

double BetaStickParams::shape_a(int j) const {
  (void)j;
  return kind == Kind::DirichletProcess ? 1.0 : 1.0 - discount;
}

double BetaStickParams::shape_b(int j) const {
  return kind == Kind::DirichletProcess ? mass : mass + discount * j;
}

void BetaStickParams::validate() const {
  if (!(mass > 0.0)) throw std::domain_error("BetaStickParams: mass must be positive");
  if (kind == Kind::PoissonDirichlet) {
    if (!(discount >= 0.0) || !(discount < 1.0))
      throw std::domain_error("BetaStickParams: discount must lie in [0,1)");
    if (!(mass + discount > 0.0))
      throw std::domain_error("BetaStickParams: M + a must be positive");
  } else if (discount != 0.0) {
    throw std::domain_error("BetaStickParams: Dirichlet process has no discount");
  }
}

double LevyDensity::inverse_tail_mass(double t, double hint) const {
  if (!(t > 0.0)) throw std::domain_error("inverse_tail_mass: target must be positive");
  return invert_decreasing([this](double x) { return tail_mass(x); }, t, hint, 1e-10);
}

GammaProcessLevy::GammaProcessLevy(double mass) : mass_(mass) {
  if (!(mass > 0.0)) throw std::domain_error("GammaProcessLevy: mass must be positive");
}

double GammaProcessLevy::density(double x) const {
  if (!(x > 0.0)) return 0.0;
  return mass_ * std::exp(-x) / x;
}

double GammaProcessLevy::tail_mass(double x) const {
  if (!(x > 0.0)) throw std::domain_error("GammaProcessLevy::tail_mass: x must be positive");
  // Substituting y = x e^u maps the tail integral of e^{-y}/y onto a finite
  // interval; e^{-x e^u} underflows beyond u = log(745/x).
  const double upper = std::log(745.0 / x);
  if (upper <= 0.0) return 0.0;
  return mass_ * integrate([x](double u) { return std::exp(-x * std::exp(u)); },
                           0.0, upper, 1e-11);
}

std::vector<double> sb_weights(std::span<const double> sticks) {
  if (sticks.empty()) throw std::domain_error("sb_weights: need at least one stick");
  const std::size_t n = sticks.size();
  for (std::size_t j = 0; j < n; ++j) {
    const double v = sticks[j];
    const bool last = (j + 1 == n);
    if (!(v > 0.0) || v > 1.0 || (!last && v >= 1.0))
      throw std::domain_error("sb_weights: sticks must lie in (0,1) with last = 1");
  }
  if (sticks[n - 1] != 1.0)
    throw std::domain_error("sb_weights: last stick must equal 1");
  std::vector<double> p(n);
  double tail = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    p[j] = sticks[j] * tail;
    tail *= 1.0 - sticks[j];
  }
  return p;
}

std::vector<double> rsb_weights(std::span<const double> sticks) {
  if (sticks.empty()) throw std::domain_error("rsb_weights: need at least one stick");
  const std::size_t n = sticks.size();
  std::vector<double> p(n);
  double tail = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double v = sticks[j];
    if (!(v > 0.0) || !(v < 1.0))
      throw std::domain_error("rsb_weights: sticks must lie in (0,1)");
    p[j] = v * tail;
    tail *= 1.0 - v;
  }
  const double norm = 1.0 - tail;
  if (!(norm > 0.0))
    throw std::domain_error("rsb_weights: degenerate sticks, zero normalizer");
  for (double& w : p) w /= norm;
  return p;
}

std::vector<double> fk_jumps(const LevyDensity& levy,
                             std::span<const double> arrival_times) {
  std::vector<double> jumps;
  jumps.reserve(arrival_times.size());
  double prev_time = 0.0;
  double hint = 1.0;
  for (double t : arrival_times) {
    if (!(t > prev_time))
      throw std::domain_error("fk_jumps: arrival times must be strictly increasing");
    const double j = levy.inverse_tail_mass(t, hint);
    jumps.push_back(j);
    hint = j;
    prev_time = t;
  }
  return jumps;
}

double fk_extend(const LevyDensity& levy, double prev_jump, Rng& rng) {
  if (!(prev_jump > 0.0)) throw std::domain_error("fk_extend: previous jump must be positive");
  const double t_next = levy.tail_mass(prev_jump) + rng.exponential(1.0);
  return levy.inverse_tail_mass(t_next, prev_jump);
}

std::vector<double> cpp_sample(const LevyDensity& levy, double level, Rng& rng) {
  if (!(level > 0.0)) throw std::domain_error("cpp_sample: level must be positive");
  const double total = levy.tail_mass(level);
  if (!std::isfinite(total))
    throw std::runtime_error("cpp_sample: tail mass not finite at this level");
  const long count = rng.poisson(total);
  std::vector<double> jumps;
  jumps.reserve(count);
  for (long i = 0; i < count; ++i) {
    const double u = rng.uniform_pos();
    jumps.push_back(levy.inverse_tail_mass(total * (1.0 - u), level));
  }
  return jumps;
}

double cpp_level_sequence(double level1, LevelScheme scheme, double xi,
                          const LevyDensity& levy, int k) {
  if (!(level1 > 0.0)) throw std::domain_error("cpp_level_sequence: L_1 must be positive");
  if (k < 1) throw std::domain_error("cpp_level_sequence: index must be >= 1");
  if (scheme == LevelScheme::Geometric) {
    if (!(xi > 0.0)) throw std::domain_error("cpp_level_sequence: xi must be positive");
    return level1 * std::exp(-xi * (k - 1));
  }
  if (k == 1) return level1;
  const double target = levy.tail_mass(level1) + (k - 1);
  return levy.inverse_tail_mass(target, level1);
}

}  // namespace atsmc::measures
