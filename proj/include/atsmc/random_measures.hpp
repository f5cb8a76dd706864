#pragma once

#include <memory>
#include <span>
#include <vector>

#include "atsmc/rng.hpp"

namespace atsmc::measures {

/// Stick-breaking Beta parameters: V_j ~ Be(a_j, b_j). The Dirichlet process
/// has a_j = 1, b_j = M; the Poisson-Dirichlet (Pitman-Yor) process has
/// a_j = 1 - a, b_j = M + a*j.
struct BetaStickParams {
  enum class Kind { DirichletProcess, PoissonDirichlet };
  Kind kind = Kind::DirichletProcess;
  double mass = 1.0;      // M
  double discount = 0.0;  // a, Poisson-Dirichlet only

  double shape_a(int j) const;  // j is 1-based
  double shape_b(int j) const;
  void validate() const;
};

/// Levy density contract: the jump density eta on (0,inf) together with its
/// tail mass zeta(x) = int_x^inf eta(y) dy. zeta is strictly decreasing.
class LevyDensity {
 public:
  virtual ~LevyDensity() = default;
  virtual double density(double x) const = 0;
  virtual double tail_mass(double x) const = 0;
  virtual bool infinite_activity() const = 0;
  /// Solve tail_mass(x) = t by bracketing bisection (relative tol 1e-10).
  virtual double inverse_tail_mass(double t, double hint = 1.0) const;
};

/// Gamma-process Levy density eta(x) = M x^{-1} e^{-x}. The tail mass is the
/// exponential integral scaled by M, evaluated by adaptive quadrature to
/// absolute tolerance 1e-10.
class GammaProcessLevy final : public LevyDensity {
 public:
  explicit GammaProcessLevy(double mass = 1.0);
  double density(double x) const override;
  double tail_mass(double x) const override;
  bool infinite_activity() const override { return true; }
  double mass() const { return mass_; }

 private:
  double mass_;
};

/// SB truncation weights: p_j = V_j prod_{l<j}(1-V_l) with V_N = 1, so the
/// weights sum to one by construction.
std::vector<double> sb_weights(std::span<const double> sticks);

/// RSB truncation weights: raw stick-breaking weights renormalized by
/// 1 - prod(1-V_j); preserves the stochastic ordering of the sticks.
std::vector<double> rsb_weights(std::span<const double> sticks);

/// Ferguson-Klass jumps J_j = zeta^{-1}(t_j) for increasing Poisson arrival
/// times; output is strictly decreasing.
std::vector<double> fk_jumps(const LevyDensity& levy,
                             std::span<const double> arrival_times);

/// One-step Ferguson-Klass extension: the next arrival is
/// zeta(prev) + Exp(1) and the next jump its inverse tail mass.
double fk_extend(const LevyDensity& levy, double prev_jump, Rng& rng);

/// Compound-Poisson jumps above a level L: count ~ Pn(zeta(L)), each jump
/// i.i.d. with density eta(x)/zeta(L) on (L, inf). Unordered.
std::vector<double> cpp_sample(const LevyDensity& levy, double level, Rng& rng);

enum class LevelScheme { Geometric, OneAtom };

/// Level sequence for the CPP truncation. Geometric: L_k = L_1 e^{-(k-1)xi}.
/// OneAtom: zeta(L_k) = zeta(L_1) + (k-1), one expected atom per step.
double cpp_level_sequence(double level1, LevelScheme scheme, double xi,
                          const LevyDensity& levy, int k);

}  // namespace atsmc::measures
