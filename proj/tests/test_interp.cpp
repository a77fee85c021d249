#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ctsq/interp.hpp"
#include "ctsq/ou.hpp"

using namespace ctsq;
using interp::Spline;
using interp::SplineKind;

namespace {
std::vector<std::vector<double>> col(const std::vector<double>& v) {
  std::vector<std::vector<double>> out;
  for (double x : v) out.push_back({x});
  return out;
}
}  // namespace

TEST_CASE("two-knot cubic degenerates to the straight line") {
  auto s = Spline::fit(SplineKind::CubicNatural, {0.0, 2.0}, col({1.0, 5.0}));
  for (double t : {0.0, 0.5, 1.0, 1.3, 2.0})
    CHECK(s.eval_dim(t, 0) == doctest::Approx(1.0 + 2.0 * t).epsilon(1e-12));
}

TEST_CASE("linear midpoint") {
  auto s = Spline::fit(SplineKind::Linear, {0.0, 1.0, 2.0}, col({0.0, 2.0, 0.0}));
  CHECK(s.eval_dim(0.5, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("interpolation property at knots") {
  const std::vector<double> times{0.0, 0.7, 1.1, 2.4, 3.0};
  const std::vector<double> vals{0.3, -1.2, 2.0, 0.1, -0.4};
  for (auto kind : {SplineKind::CubicNatural, SplineKind::Linear}) {
    auto s = Spline::fit(kind, times, col(vals));
    for (std::size_t i = 0; i < times.size(); ++i)
      CHECK(s.eval_dim(times[i], 0) == doctest::Approx(vals[i]).epsilon(1e-12));
  }
}

TEST_CASE("cubic fit reproduces another natural cubic spline exactly") {
  // well-posedness oracle: interpolating a natural cubic's own samples on the
  // same knots must return the same function everywhere
  const std::vector<double> times{0.0, 0.5, 1.0, 1.7, 2.2, 3.0};
  std::vector<double> vals;
  for (double t : times) vals.push_back(std::sin(1.7 * t) + 0.3 * t);
  auto s1 = Spline::fit(SplineKind::CubicNatural, times, col(vals));
  std::vector<double> resampled;
  for (double t : times) resampled.push_back(s1.eval_dim(t, 0));
  auto s2 = Spline::fit(SplineKind::CubicNatural, times, col(resampled));
  for (int i = 0; i <= 100; ++i) {
    const double t = 3.0 * i / 100.0;
    CHECK(s2.eval_dim(t, 0) == doctest::Approx(s1.eval_dim(t, 0)).epsilon(1e-10));
  }
}

TEST_CASE("fit rejects bad knots") {
  CHECK_THROWS(Spline::fit(SplineKind::Linear, {0.0}, col({1.0})));
  CHECK_THROWS(Spline::fit(SplineKind::Linear, {0.0, 0.0}, col({1.0, 2.0})));
  CHECK_THROWS(Spline::fit(SplineKind::Linear, {1.0, 0.5}, col({1.0, 2.0})));
}

TEST_CASE("out-of-domain evaluation clamps to boundary values") {
  auto s = Spline::fit(SplineKind::CubicNatural, {0.0, 1.0, 2.0}, col({1.0, 3.0, -1.0}));
  CHECK(s.eval_dim(-5.0, 0) == doctest::Approx(1.0));
  CHECK(s.eval_dim(9.0, 0) == doctest::Approx(-1.0));
}

TEST_CASE("weight_row matches finite differences of eval") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> times{0.0, 0.4, 1.0, 1.5, 2.3};
  std::vector<double> vals(times.size());
  for (auto& v : vals) v = u(rng);
  for (auto kind : {SplineKind::CubicNatural, SplineKind::Linear}) {
    for (double t : {0.2, 0.4, 0.9, 1.9}) {
      auto s = Spline::fit(kind, times, col(vals));
      const auto w = s.weight_row(t);
      const double eps = 1e-6;
      for (std::size_t k = 0; k < times.size(); ++k) {
        auto hi = vals, lo = vals;
        hi[k] += eps;
        lo[k] -= eps;
        const double fd = (Spline::fit(kind, times, col(hi)).eval_dim(t, 0) -
                           Spline::fit(kind, times, col(lo)).eval_dim(t, 0)) /
                          (2 * eps);
        CHECK(w[k] == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("eval is linear in knot values") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const std::vector<double> times{0.0, 1.0, 2.0, 3.5};
  std::vector<double> a(4), b(4), ab(4);
  for (int i = 0; i < 4; ++i) {
    a[i] = u(rng);
    b[i] = u(rng);
    ab[i] = a[i] + b[i];
  }
  for (auto kind : {SplineKind::CubicNatural, SplineKind::Linear}) {
    auto sa = Spline::fit(kind, times, col(a));
    auto sb = Spline::fit(kind, times, col(b));
    auto sab = Spline::fit(kind, times, col(ab));
    for (double t : {0.3, 1.2, 2.9})
      CHECK(sab.eval_dim(t, 0) ==
            doctest::Approx(sa.eval_dim(t, 0) + sb.eval_dim(t, 0)).epsilon(1e-12));
  }
}

TEST_CASE("cubic spline is C2 at interior joints") {
  std::vector<double> times{0.0, 0.6, 1.0, 1.8, 2.5};
  std::vector<double> vals{0.1, 1.0, -0.5, 0.7, 0.2};
  auto s = Spline::fit(SplineKind::CubicNatural, times, col(vals));
  const double h = 1e-5;
  for (std::size_t k = 1; k + 1 < times.size(); ++k) {
    const double t = times[k];
    // second difference from either side
    const double left =
        (s.eval_dim(t - 2 * h, 0) - 2 * s.eval_dim(t - h, 0) + s.eval_dim(t, 0)) /
        (h * h);
    const double right =
        (s.eval_dim(t, 0) - 2 * s.eval_dim(t + h, 0) + s.eval_dim(t + 2 * h, 0)) /
        (h * h);
    CHECK(left == doctest::Approx(right).epsilon(1e-3));
  }
}

TEST_CASE("linear spline approximates the OU bridge mean for small nu*dt") {
  // quantifies the conditional-expectation equivalence claim
  const double nu = 0.5, dt = 0.2;  // nu*dt = 0.1
  const double z1 = 0.8, z2 = -0.6;
  auto s = Spline::fit(SplineKind::Linear, {0.0, dt}, col({z1, z2}));
  for (double frac : {0.25, 0.5, 0.75}) {
    const double t = frac * dt;
    const double lin = s.eval_dim(t, 0);
    const double bridge = ou::bridge_mean(nu, t, 0.0, z1, dt, z2);
    CHECK(std::abs(lin - bridge) <=
          0.02 * std::max(1.0, std::abs(bridge)));
  }
}

TEST_CASE("multi-dimensional eval") {
  auto s = Spline::fit(SplineKind::Linear, {0.0, 1.0},
                       {{1.0, 10.0}, {3.0, 20.0}});
  const auto v = s.eval(0.5);
  CHECK(v[0] == doctest::Approx(2.0));
  CHECK(v[1] == doctest::Approx(15.0));
}
