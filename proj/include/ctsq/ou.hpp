#pragma once

#include <span>
#include <vector>

namespace ctsq::ou {

// Threshold below which a latent dimension is treated as time-constant
// ("global") and pruned to its initial value at compression time.
inline constexpr double kDefaultPruneThreshold = 1e-3;

// Diagonal diffusion of the mean-reverting prior process with drift
// -0.5*nu^2*z, stationary at N(0, I).
struct OuParams {
  std::vector<double> nu;

  explicit OuParams(std::vector<double> nu_);
  std::size_t dims() const { return nu.size(); }

  bool is_global(std::size_t d, double threshold = kDefaultPruneThreshold) const {
    return nu[d] <= threshold;
  }
};

struct Transition {
  double mean_mult;  // e^{-nu^2 dt / 2}
  double var;        // 1 - e^{-nu^2 dt}
};

// Exact transition of the prior over a time gap dt. mean_mult^2 + var = 1,
// so the standard normal is invariant.
Transition transition_params(double nu, double dt);

// Log-density (nats) of the joint over a skeleton of points, per-dimension
// diffusion. values[d][i] is the value of dimension d at times[i].
// A degenerate transition (var = 0) contributes -inf unless the value sits
// exactly at the transition mean.
double joint_log_density(const OuParams& params, std::span<const double> times,
                         const std::vector<std::vector<double>>& values);

// Scalar version for a single dimension.
double joint_log_density_1d(double nu, std::span<const double> times,
                            std::span<const double> values);

// Exact conditional expectation E[z(t) | z(t1)=z1, z(t2)=z2] of the bridge.
// For nu -> 0 this limits to linear interpolation between the endpoints.
double bridge_mean(double nu, double t, double t1, double z1, double t2, double z2);

}  // namespace ctsq::ou
