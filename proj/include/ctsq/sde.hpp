#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ctsq/nn.hpp"

namespace ctsq::sde {

// Brownian increments over a grid; increment k has variance grid[k+1]-grid[k].
// Draws are counter-based on (seed, step, dim), so regenerating with the same
// seed and grid is bit-for-bit reproducible.
struct BrownianPath {
  std::uint64_t seed = 0;
  std::vector<double> grid;
  std::vector<std::vector<double>> increments;  // [steps][dims]

  static BrownianPath generate(std::uint64_t seed, std::vector<double> grid,
                               std::size_t dims);
  static BrownianPath from_increments(std::vector<double> grid,
                                      std::vector<std::vector<double>> increments);

  // Sum of increments over (t_a, t_b]; both must be grid points.
  std::vector<double> increment_between(double t_a, double t_b) const;
};

struct SolverGrid {
  std::vector<double> times;

  // Uniform grid of n_uniform intervals over [t0, t_end], unioned with every
  // extra time exactly (no snapping).
  static SolverGrid make(double t0, double t_end, int n_uniform,
                         std::span<const double> extra = {},
                         std::span<const double> extra2 = {});
};

using Drift = std::function<nn::Tensor(const nn::Tensor& z, double t)>;
using DriftD = std::function<std::vector<double>(std::span<const double> z, double t)>;

// A solved trajectory: values at every grid time, differentiable end to end.
struct LatentPath {
  std::vector<double> times;
  std::vector<nn::Tensor> values;

  std::size_t index_of(double t) const;
  const nn::Tensor& at_time(double t) const { return values[index_of(t)]; }
};

// Euler-Maruyama: z_{k+1} = z_k + dt*drift(z_k,t_k) + nu .* dW_k.
// path.grid must contain every grid time. nu is a positive tensor of size D.
LatentPath euler_solve(const nn::Tensor& z0, const Drift& drift, const nn::Tensor& nu,
                       const BrownianPath& path, const SolverGrid& grid);

// Plain-double twin for oracles and Monte Carlo studies.
std::vector<std::vector<double>> euler_solve_d(std::span<const double> z0,
                                               const DriftD& drift,
                                               std::span<const double> nu,
                                               const BrownianPath& path,
                                               const SolverGrid& grid);

// Euler pseudo-likelihood of a value skeleton under the drift:
//   q0_logpdf + sum_i log N(z_i; z_{i-1} + dt_i*f(z_{i-1},t_{i-1}), dt_i*nu^2)
nn::Tensor pseudo_log_likelihood(const Drift& drift, const nn::Tensor& nu,
                                 std::span<const double> times,
                                 const std::vector<nn::Tensor>& values,
                                 const nn::Tensor& q0_logpdf);

// Double version; a zero nu component contributes -inf unless the value
// matches the deterministic Euler step exactly.
double pseudo_log_likelihood_d(const DriftD& drift, std::span<const double> nu,
                               std::span<const double> times,
                               const std::vector<std::vector<double>>& values,
                               double q0_logpdf);

}  // namespace ctsq::sde
