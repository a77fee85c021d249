#include "ctsq/sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctsq/mathutil.hpp"

namespace ctsq::sde {

namespace {
void check_grid(const std::vector<double>& grid) {
  if (grid.size() < 2) throw std::invalid_argument("grid needs at least 2 points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw std::invalid_argument("grid must be strictly increasing");
}
}  // namespace

BrownianPath BrownianPath::generate(std::uint64_t seed, std::vector<double> grid,
                                    std::size_t dims) {
  check_grid(grid);
  BrownianPath p;
  p.seed = seed;
  p.grid = std::move(grid);
  const std::size_t steps = p.grid.size() - 1;
  p.increments.assign(steps, std::vector<double>(dims));
  for (std::size_t k = 0; k < steps; ++k) {
    const double sd = std::sqrt(p.grid[k + 1] - p.grid[k]);
    for (std::size_t d = 0; d < dims; ++d)
      p.increments[k][d] = sd * counter_normal(seed, k, d);
  }
  return p;
}

BrownianPath BrownianPath::from_increments(std::vector<double> grid,
                                           std::vector<std::vector<double>> increments) {
  check_grid(grid);
  if (increments.size() != grid.size() - 1)
    throw std::invalid_argument("BrownianPath: increments/grid size mismatch");
  BrownianPath p;
  p.grid = std::move(grid);
  p.increments = std::move(increments);
  return p;
}

std::vector<double> BrownianPath::increment_between(double t_a, double t_b) const {
  const auto it_a = std::lower_bound(grid.begin(), grid.end(), t_a);
  const auto it_b = std::lower_bound(grid.begin(), grid.end(), t_b);
  if (it_a == grid.end() || *it_a != t_a || it_b == grid.end() || *it_b != t_b)
    throw std::invalid_argument("increment_between: endpoints not on the path grid");
  const std::size_t a = static_cast<std::size_t>(it_a - grid.begin());
  const std::size_t b = static_cast<std::size_t>(it_b - grid.begin());
  if (b <= a) throw std::invalid_argument("increment_between: t_b must exceed t_a");
  std::vector<double> acc(increments[0].size(), 0.0);
  for (std::size_t k = a; k < b; ++k)
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += increments[k][d];
  return acc;
}

SolverGrid SolverGrid::make(double t0, double t_end, int n_uniform,
                            std::span<const double> extra,
                            std::span<const double> extra2) {
  if (!(t_end > t0)) throw std::invalid_argument("SolverGrid: t_end must exceed t0");
  if (n_uniform < 1) throw std::invalid_argument("SolverGrid: n_uniform must be >= 1");
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(n_uniform) + 1 + extra.size() + extra2.size());
  for (int k = 0; k <= n_uniform; ++k)
    times.push_back(t0 + (t_end - t0) * static_cast<double>(k) /
                             static_cast<double>(n_uniform));
  times.back() = t_end;
  times.front() = t0;
  auto add = [&](double t) {
    if (t < t0 || t > t_end)
      throw std::invalid_argument("SolverGrid: extra time outside [t0, t_end]");
    times.push_back(t);
  };
  for (double t : extra) add(t);
  for (double t : extra2) add(t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  SolverGrid g;
  g.times = std::move(times);
  return g;
}

std::size_t LatentPath::index_of(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it != times.end() && *it == t)
    return static_cast<std::size_t>(it - times.begin());
  throw std::invalid_argument("LatentPath: time not on grid");
}

LatentPath euler_solve(const nn::Tensor& z0, const Drift& drift, const nn::Tensor& nu,
                       const BrownianPath& path, const SolverGrid& grid) {
  check_grid(grid.times);
  for (double v : z0.data())
    if (!std::isfinite(v)) throw std::invalid_argument("euler_solve: non-finite z0");

  LatentPath out;
  out.times = grid.times;
  out.values.reserve(grid.times.size());
  out.values.push_back(z0);
  nn::Tensor z = z0;
  for (std::size_t k = 0; k + 1 < grid.times.size(); ++k) {
    const double t = grid.times[k];
    const double dt = grid.times[k + 1] - t;
    nn::Tensor f = drift(z, t);
    for (double v : f.data())
      if (!std::isfinite(v))
        throw std::runtime_error("euler_solve: non-finite drift at t=" +
                                 std::to_string(t));
    const auto dw = path.increment_between(t, grid.times[k + 1]);
    nn::Tensor dw_t = nn::Tensor::constant(dw, {static_cast<int>(dw.size())});
    z = nn::add(nn::add(z, nn::scale(f, dt)), nn::mul(nu, dw_t));
    out.values.push_back(z);
  }
  return out;
}

std::vector<std::vector<double>> euler_solve_d(std::span<const double> z0,
                                               const DriftD& drift,
                                               std::span<const double> nu,
                                               const BrownianPath& path,
                                               const SolverGrid& grid) {
  std::vector<std::vector<double>> out;
  out.reserve(grid.times.size());
  std::vector<double> z(z0.begin(), z0.end());
  out.push_back(z);
  for (std::size_t k = 0; k + 1 < grid.times.size(); ++k) {
    const double t = grid.times[k];
    const double dt = grid.times[k + 1] - t;
    const auto f = drift(z, t);
    const auto dw = path.increment_between(t, grid.times[k + 1]);
    for (std::size_t d = 0; d < z.size(); ++d) z[d] += dt * f[d] + nu[d] * dw[d];
    out.push_back(z);
  }
  return out;
}

nn::Tensor pseudo_log_likelihood(const Drift& drift, const nn::Tensor& nu,
                                 std::span<const double> times,
                                 const std::vector<nn::Tensor>& values,
                                 const nn::Tensor& q0_logpdf) {
  if (times.size() != values.size() || times.empty())
    throw std::invalid_argument("pseudo_log_likelihood: times/values mismatch");
  nn::Tensor acc = q0_logpdf;
  nn::Tensor log_nu_sq = nn::scale(nn::log_t(nu), 2.0);
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double dt = times[i] - times[i - 1];
    if (!(dt > 0.0))
      throw std::invalid_argument("pseudo_log_likelihood: times must increase");
    nn::Tensor mean = nn::add(values[i - 1],
                              nn::scale(drift(values[i - 1], times[i - 1]), dt));
    nn::Tensor log_var = nn::add_scalar(log_nu_sq, std::log(dt));
    acc = nn::add(acc, nn::gaussian_logpdf(values[i], mean, log_var));
  }
  return acc;
}

double pseudo_log_likelihood_d(const DriftD& drift, std::span<const double> nu,
                               std::span<const double> times,
                               const std::vector<std::vector<double>>& values,
                               double q0_logpdf) {
  if (times.size() != values.size() || times.empty())
    throw std::invalid_argument("pseudo_log_likelihood: times/values mismatch");
  double acc = q0_logpdf;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double dt = times[i] - times[i - 1];
    if (!(dt > 0.0))
      throw std::invalid_argument("pseudo_log_likelihood: times must increase");
    const auto f = drift(values[i - 1], times[i - 1]);
    for (std::size_t d = 0; d < nu.size(); ++d) {
      const double mean = values[i - 1][d] + dt * f[d];
      const double var = dt * nu[d] * nu[d];
      if (var == 0.0) {
        if (values[i][d] != mean) return -std::numeric_limits<double>::infinity();
        continue;
      }
      acc += norm_logpdf(values[i][d], mean, var);
    }
  }
  return acc;
}

}  // namespace ctsq::sde
