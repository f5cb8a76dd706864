#pragma once

#include <functional>

#include "atsmc/rng.hpp"

namespace atsmc::amh {

/// Per-parameter adaptive random-walk state. The proposal log-variance is
/// nudged by i^{-c}(alpha_i - target) each step and clamped to [-bound, bound].
struct AdaptiveScale {
  double log_var = 0.0;
  long iteration = 1;
  double exponent = 0.55;    // c in (0.5, 1]
  double target_rate = 0.3;  // alpha-hat
  double bound = 50.0;       // b

  double proposal_sd() const;
};

void adapt_step(AdaptiveScale& state, double accept_prob);

enum class Transform { Identity, Log, Logit, FisherRho };

double apply_transform(Transform t, double x);
double apply_inverse(Transform t, double z);
/// log |dx/dz| at x, the Jacobian term entering the MH ratio.
double log_jacobian(Transform t, double x);

struct MhResult {
  double value = 0.0;
  double accept_prob = 0.0;
  bool accepted = false;
};

/// One adaptive random-walk Metropolis-Hastings step on the transformed scale.
/// `log_density` is the target on the original scale; the Jacobian of the
/// transform is included in the acceptance ratio. The realized acceptance
/// probability is fed back into `state`.
MhResult mh_step(double current, const std::function<double(double)>& log_density,
                 Transform transform, AdaptiveScale& state, Rng& rng);

/// A (0,1) variable stored with its exact log complement, so values that
/// round to 1 keep their distance from 1.
struct UnitValue {
  double value = 0.5;
  double log1m = -0.6931471805599453;
};

/// Logit random walk for a stick value carried as a (value, log complement)
/// pair; the target receives both. Equivalent to mh_step with the Logit
/// transform but exact arbitrarily close to one.
UnitValue mh_step_logit_pair(
    UnitValue current, const std::function<double(double, double)>& log_density,
    AdaptiveScale& state, Rng& rng);

}  // namespace atsmc::amh
