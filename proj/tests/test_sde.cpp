#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ctsq/mathutil.hpp"
#include "ctsq/ou.hpp"
#include "ctsq/sde.hpp"

using namespace ctsq;
using nn::Tensor;

namespace {
sde::DriftD ou_drift_d(double nu) {
  return [nu](std::span<const double> z, double) {
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = -0.5 * nu * nu * z[i];
    return out;
  };
}
}  // namespace

TEST_CASE("brownian path: bit-exact regeneration and increment variance") {
  auto grid = sde::SolverGrid::make(0.0, 1.0, 10);
  auto p1 = sde::BrownianPath::generate(42, grid.times, 3);
  auto p2 = sde::BrownianPath::generate(42, grid.times, 3);
  CHECK(p1.increments == p2.increments);
  // empirical variance of many regenerations at one step
  double acc = 0.0;
  const int n = 20000;
  for (int s = 0; s < n; ++s) {
    auto p = sde::BrownianPath::generate(static_cast<std::uint64_t>(s), grid.times, 1);
    acc += p.increments[4][0] * p.increments[4][0];
  }
  const double dt = grid.times[5] - grid.times[4];
  CHECK(acc / n == doctest::Approx(dt).epsilon(0.05));
  // increment_between sums steps exactly
  const auto sum = p1.increment_between(grid.times[2], grid.times[6]);
  double manual = 0.0;
  for (std::size_t k = 2; k < 6; ++k) manual += p1.increments[k][0];
  CHECK(sum[0] == doctest::Approx(manual).epsilon(1e-15));
}

TEST_CASE("solver grid contains extras exactly") {
  auto grid = sde::SolverGrid::make(0.0, 1.0, 4, std::vector<double>{0.33, 0.77},
                                    std::vector<double>{0.5, 0.33});
  for (double t : {0.0, 0.25, 0.33, 0.5, 0.77, 1.0})
    CHECK(std::find(grid.times.begin(), grid.times.end(), t) != grid.times.end());
  CHECK(std::is_sorted(grid.times.begin(), grid.times.end()));
  CHECK(std::adjacent_find(grid.times.begin(), grid.times.end()) ==
        grid.times.end());
}

TEST_CASE("euler: zero drift, zero noise gives a constant trajectory") {
  auto grid = sde::SolverGrid::make(0.0, 2.0, 8);
  auto bp = sde::BrownianPath::generate(1, grid.times, 2);
  const Tensor z0 = Tensor::constant({0.7, -1.1}, {2});
  auto zero_drift = [](const Tensor& z, double) { return nn::scale(z, 0.0); };
  auto path = sde::euler_solve(z0, zero_drift, Tensor::zeros({2}), bp, grid);
  for (const auto& v : path.values) {
    CHECK(v.data()[0] == doctest::Approx(0.7));
    CHECK(v.data()[1] == doctest::Approx(-1.1));
  }
}

TEST_CASE("euler: OU sample moments match the exact transition") {
  const double nu = 1.0, t_end = 1.0;
  auto grid = sde::SolverGrid::make(0.0, t_end, 64);
  const double z0 = 1.3;
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int s = 0; s < n; ++s) {
    auto bp = sde::BrownianPath::generate(1000 + static_cast<std::uint64_t>(s),
                                          grid.times, 1);
    auto path = sde::euler_solve_d({&z0, 1}, ou_drift_d(nu), {&nu, 1}, bp, grid);
    const double z = path.back()[0];
    sum += z;
    sum2 += z * z;
  }
  const auto tr = ou::transition_params(nu, t_end);
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double se_mean = std::sqrt(var / n);
  const double se_var = var * std::sqrt(2.0 / n);
  // Euler bias at 64 substeps is within the 3-SE Monte Carlo band
  CHECK(std::abs(mean - tr.mean_mult * z0) <= 3.0 * se_mean + 0.01);
  CHECK(std::abs(var - tr.var) <= 3.0 * se_var + 0.02);
}

TEST_CASE("euler: strong self-convergence under step halving") {
  // on the OU problem (additive noise) the strong order is at least 1/2, so
  // halving the step must shrink the error by at least 2^{-1/2}
  const double nu = 1.0;
  double err_coarse = 0.0, err_fine = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const std::uint64_t seed = 50 + static_cast<std::uint64_t>(r);
    auto ref_grid = sde::SolverGrid::make(0.0, 1.0, 512);
    auto bp = sde::BrownianPath::generate(seed, ref_grid.times, 1);
    const double z0 = 0.9;
    auto solve_at = [&](int steps) {
      auto g = sde::SolverGrid::make(0.0, 1.0, steps);
      // shared Brownian path: sum the fine increments between coarse points
      std::vector<std::vector<double>> incs;
      for (std::size_t k = 0; k + 1 < g.times.size(); ++k)
        incs.push_back(bp.increment_between(g.times[k], g.times[k + 1]));
      auto coarse = sde::BrownianPath::from_increments(g.times, incs);
      return sde::euler_solve_d({&z0, 1}, ou_drift_d(nu), {&nu, 1}, coarse, g).back()[0];
    };
    const double ref = solve_at(512);
    err_coarse += std::abs(solve_at(16) - ref);
    err_fine += std::abs(solve_at(32) - ref);
  }
  const double ratio = err_fine / err_coarse;
  CHECK(ratio <= std::pow(2.0, -0.5) + 0.05);
}

TEST_CASE("coupling: same Brownian path, nu=0 reduces to deterministic ODEs") {
  auto grid = sde::SolverGrid::make(0.0, 1.0, 32);
  auto bp = sde::BrownianPath::generate(3, grid.times, 1);
  const double z0 = 1.0;
  const double nu0 = 0.0;
  auto path = sde::euler_solve_d({&z0, 1}, ou_drift_d(1.0), {&nu0, 1}, bp, grid);
  // forward Euler on dz = -z/2 dt
  double z = z0;
  for (std::size_t k = 0; k + 1 < grid.times.size(); ++k)
    z += (grid.times[k + 1] - grid.times[k]) * (-0.5 * z);
  CHECK(path.back()[0] == doctest::Approx(z).epsilon(1e-14));
}

TEST_CASE("euler: non-finite drift raises with the offending time") {
  auto grid = sde::SolverGrid::make(0.0, 1.0, 4);
  auto bp = sde::BrownianPath::generate(5, grid.times, 1);
  const Tensor z0 = Tensor::constant({1.0}, {1});
  auto bad = [](const Tensor& z, double t) {
    return t >= 0.5 ? nn::scale(nn::log_t(nn::scale(z, -1.0)), 1.0)
                    : nn::scale(z, 0.0);
  };
  CHECK_THROWS(sde::euler_solve(z0, bad, Tensor::zeros({1}), bp, grid));
}

TEST_CASE("gradient of euler_solve w.r.t. z0 matches finite differences") {
  auto grid = sde::SolverGrid::make(0.0, 1.0, 10);
  auto bp = sde::BrownianPath::generate(7, grid.times, 2);
  nn::ParamStore ps;
  auto z0 = ps.create_const_init("z0", {2}, 0.0);
  z0.mutable_data() = {0.4, -0.9};
  auto drift = [](const Tensor& z, double) {
    return nn::scale(nn::tanh_t(z), 0.7);
  };
  const Tensor nu = Tensor::constant({0.5, 0.8}, {2});
  auto loss_fn = [&] {
    auto path = sde::euler_solve(z0, drift, nu, bp, grid);
    return nn::sum(nn::square(path.values.back()));
  };
  ps.zero_grad();
  nn::backward(loss_fn());
  const double eps = 1e-6;
  for (std::size_t i = 0; i < 2; ++i) {
    const double save = z0.data()[i];
    z0.mutable_data()[i] = save + eps;
    const double hi = loss_fn().value();
    z0.mutable_data()[i] = save - eps;
    const double lo = loss_fn().value();
    z0.mutable_data()[i] = save;
    const double fd = (hi - lo) / (2 * eps);
    CHECK(std::abs(z0.grad()[i] - fd) /
              std::max({std::abs(fd), std::abs(z0.grad()[i]), 1e-8}) <=
          1e-5);
  }
}

TEST_CASE("pseudo-likelihood: one standard-normal increment") {
  const double q0 = -1.7;
  const double nu = 1.0;
  const std::vector<double> times{0.0, 1.0};
  const double expected = q0 + norm_logpdf(0.0, 0.0, 1.0);
  CHECK(sde::pseudo_log_likelihood_d(
            [](std::span<const double> z, double) {
              return std::vector<double>(z.size(), 0.0);
            },
            {&nu, 1}, times, {{0.0}, {0.0}}, q0) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pseudo-likelihood: constant drift matches a hand product") {
  const double c = 0.3, nu = 0.7;
  const std::vector<double> times{0.0, 0.5, 1.2};
  const std::vector<std::vector<double>> vals{{0.1}, {0.4}, {-0.2}};
  double oracle = 0.0;
  for (int i = 1; i < 3; ++i) {
    const double dt = times[static_cast<std::size_t>(i)] -
                      times[static_cast<std::size_t>(i - 1)];
    oracle += norm_logpdf(vals[static_cast<std::size_t>(i)][0],
                          vals[static_cast<std::size_t>(i - 1)][0] + dt * c,
                          dt * nu * nu);
  }
  auto drift = [c](std::span<const double> z, double) {
    return std::vector<double>(z.size(), c);
  };
  CHECK(sde::pseudo_log_likelihood_d(drift, {&nu, 1}, times, vals, 0.0) ==
        doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("pseudo-likelihood converges to the exact OU joint density") {
  // evaluate both on the same fine path skeleton and compare per-step error
  const double nu = 0.8;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (double dt : {1e-2, 1e-3}) {
    const int steps = 50;
    std::vector<double> times(steps + 1);
    std::vector<double> vals(steps + 1);
    vals[0] = 0.2;
    for (int i = 1; i <= steps; ++i) {
      times[static_cast<std::size_t>(i)] = dt * i;
      const auto tr = ou::transition_params(nu, dt);
      vals[static_cast<std::size_t>(i)] =
          tr.mean_mult * vals[static_cast<std::size_t>(i - 1)] +
          std::sqrt(tr.var) * nd(rng);
    }
    std::vector<std::vector<double>> skel;
    for (double v : vals) skel.push_back({v});
    const double exact = ou::joint_log_density_1d(nu, times, vals);
    const double q0 = norm_logpdf(vals[0], 0.0, 1.0);
    const double pseudo = sde::pseudo_log_likelihood_d(
        ou_drift_d(nu), {&nu, 1}, times, skel, q0);
    const double per_step = std::abs(pseudo - exact) / steps;
    if (dt == 1e-3) CHECK(per_step < 1e-4);
  }
}

TEST_CASE("pseudo-likelihood: tensor and double versions agree") {
  const double nu_v = 0.6;
  const std::vector<double> times{0.0, 0.4, 1.0};
  const std::vector<std::vector<double>> vals{{0.1, -0.3}, {0.2, 0.0}, {0.5, 0.1}};
  std::vector<Tensor> tvals;
  for (const auto& v : vals) tvals.push_back(Tensor::constant(v, {2}));
  auto drift_t = [](const Tensor& z, double) { return nn::scale(z, -0.2); };
  auto drift_d = [](std::span<const double> z, double) {
    std::vector<double> o(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) o[i] = -0.2 * z[i];
    return o;
  };
  const Tensor nu = Tensor::constant({nu_v, nu_v}, {2});
  const double nus[2] = {nu_v, nu_v};
  const double t_val =
      sde::pseudo_log_likelihood(drift_t, nu, times, tvals, Tensor::scalar(0.0))
          .value();
  const double d_val =
      sde::pseudo_log_likelihood_d(drift_d, {nus, 2}, times, vals, 0.0);
  CHECK(t_val == doctest::Approx(d_val).epsilon(1e-12));
}
