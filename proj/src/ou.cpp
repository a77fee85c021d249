#include "ctsq/ou.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctsq/mathutil.hpp"

namespace ctsq::ou {

OuParams::OuParams(std::vector<double> nu_) : nu(std::move(nu_)) {
  for (double v : nu) {
    if (!std::isfinite(v) || v < 0.0)
      throw std::domain_error("OuParams: nu must be finite and >= 0");
  }
}

Transition transition_params(double nu, double dt) {
  if (!std::isfinite(nu) || nu < 0.0)
    throw std::domain_error("transition_params: nu must be finite and >= 0");
  if (!std::isfinite(dt) || dt <= 0.0)
    throw std::domain_error("transition_params: dt must be finite and > 0");
  const double a = nu * nu * dt;
  return Transition{std::exp(-0.5 * a), -std::expm1(-a)};
}

double joint_log_density_1d(double nu, std::span<const double> times,
                            std::span<const double> values) {
  if (times.size() != values.size() || times.empty())
    throw std::invalid_argument("joint_log_density: times/values size mismatch");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("joint_log_density: times must be strictly increasing");
  }
  double log_p = norm_logpdf(values[0], 0.0, 1.0);
  for (std::size_t i = 1; i < times.size(); ++i) {
    const Transition tr = transition_params(nu, times[i] - times[i - 1]);
    const double mean = values[i - 1] * tr.mean_mult;
    if (tr.var == 0.0) {
      // Degenerate transition: point mass at the mean.
      if (values[i] != mean) return -std::numeric_limits<double>::infinity();
      continue;
    }
    log_p += norm_logpdf(values[i], mean, tr.var);
  }
  return log_p;
}

double joint_log_density(const OuParams& params, std::span<const double> times,
                         const std::vector<std::vector<double>>& values) {
  if (values.size() != params.dims())
    throw std::invalid_argument("joint_log_density: dimension mismatch");
  double total = 0.0;
  for (std::size_t d = 0; d < params.dims(); ++d)
    total += joint_log_density_1d(params.nu[d], times, values[d]);
  return total;
}

double bridge_mean(double nu, double t, double t1, double z1, double t2, double z2) {
  if (!(t1 < t && t < t2))
    throw std::domain_error("bridge_mean: t must lie strictly inside (t1, t2)");
  const double theta = 0.5 * nu * nu;
  const double span = t2 - t1;
  if (theta * span < 1e-8) {
    const double w = (t - t1) / span;
    return (1.0 - w) * z1 + w * z2;
  }
  const double denom = std::sinh(theta * span);
  return (z1 * std::sinh(theta * (t2 - t)) + z2 * std::sinh(theta * (t - t1))) / denom;
}

}  // namespace ctsq::ou
