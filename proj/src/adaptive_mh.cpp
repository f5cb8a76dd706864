#include "atsmc/adaptive_mh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace atsmc::amh {

double AdaptiveScale::proposal_sd() const { return std::exp(0.5 * log_var); }

void adapt_step(AdaptiveScale& state, double accept_prob) {
  if (!(accept_prob >= 0.0) || !(accept_prob <= 1.0))
    throw std::domain_error("adapt_step: acceptance probability outside [0,1]");
  const double step = std::pow(static_cast<double>(state.iteration), -state.exponent);
  const double raw = state.log_var + step * (accept_prob - state.target_rate);
  state.log_var = std::clamp(raw, -state.bound, state.bound);
  state.iteration += 1;
}

double apply_transform(Transform t, double x) {
  switch (t) {
    case Transform::Identity:
      return x;
    case Transform::Log:
      return std::log(x);
    case Transform::Logit:
      return std::log(x) - std::log1p(-x);
    case Transform::FisherRho:
      return std::log1p(x) - std::log1p(-x);
  }
  return x;
}

double apply_inverse(Transform t, double z) {
  switch (t) {
    case Transform::Identity:
      return z;
    case Transform::Log:
      return std::exp(z);
    case Transform::Logit:
      return 1.0 / (1.0 + std::exp(-z));
    case Transform::FisherRho:
      return std::tanh(0.5 * z);
  }
  return z;
}

double log_jacobian(Transform t, double x) {
  switch (t) {
    case Transform::Identity:
      return 0.0;
    case Transform::Log:
      return std::log(x);
    case Transform::Logit:
      return std::log(x) + std::log1p(-x);
    case Transform::FisherRho:
      return std::log1p(-x * x) - std::log(2.0);
  }
  return 0.0;
}

UnitValue mh_step_logit_pair(
    UnitValue current, const std::function<double(double, double)>& log_density,
    AdaptiveScale& state, Rng& rng) {
  const auto from_logit = [](double z) {
    UnitValue u;
    if (z >= 0.0) {
      u.value = 1.0 / (1.0 + std::exp(-z));
      u.log1m = -z - std::log1p(std::exp(-z));
    } else {
      u.value = std::exp(z) / (1.0 + std::exp(z));
      u.log1m = -std::log1p(std::exp(z));
    }
    if (!(u.value > 0.0)) u.value = 1e-300;
    return u;
  };
  const auto log_value = [](const UnitValue& u) {
    return u.log1m < -1e-9 ? std::log1p(-std::exp(u.log1m)) : std::log(u.value);
  };
  const double z = log_value(current) - current.log1m;
  const UnitValue proposal = from_logit(z + state.proposal_sd() * rng.normal());
  const double ll_cur = log_density(current.value, current.log1m);
  if (!std::isfinite(ll_cur))
    throw std::domain_error("mh_step_logit_pair: log density not finite at current value");
  const double ll_prop = log_density(proposal.value, proposal.log1m);
  double alpha = 0.0;
  if (ll_prop > -std::numeric_limits<double>::infinity()) {
    // Jacobian log|dv/dz| = log v + log(1-v), from the exact pairs
    const double log_ratio = ll_prop + log_value(proposal) + proposal.log1m -
                             ll_cur - log_value(current) - current.log1m;
    alpha = std::min(1.0, std::exp(log_ratio));
  }
  const bool accepted = rng.uniform() < alpha;
  adapt_step(state, alpha);
  return accepted ? proposal : current;
}

MhResult mh_step(double current, const std::function<double(double)>& log_density,
                 Transform transform, AdaptiveScale& state, Rng& rng) {
  const double ll_cur = log_density(current);
  if (!std::isfinite(ll_cur))
    throw std::domain_error("mh_step: log density not finite at current value");
  const double z = apply_transform(transform, current);
  const double z_prop = z + state.proposal_sd() * rng.normal();
  const double proposal = apply_inverse(transform, z_prop);

  MhResult result;
  const double ll_prop = log_density(proposal);
  double alpha = 0.0;
  if (ll_prop > -std::numeric_limits<double>::infinity()) {
    const double log_ratio = ll_prop + log_jacobian(transform, proposal) -
                             ll_cur - log_jacobian(transform, current);
    alpha = std::min(1.0, std::exp(log_ratio));
  }
  result.accept_prob = alpha;
  result.accepted = rng.uniform() < alpha;
  result.value = result.accepted ? proposal : current;
  adapt_step(state, alpha);
  return result;
}

}  // namespace atsmc::amh
