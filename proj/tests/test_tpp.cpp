#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ctsq/interp.hpp"
#include "ctsq/mathutil.hpp"
#include "ctsq/tpp.hpp"

using namespace ctsq;

namespace {

interp::Spline dummy_h(double t_end) {
  return interp::Spline::fit(interp::SplineKind::Linear, {0.0, t_end},
                             {{0.0}, {0.0}});
}

tpp::GapNets const_nets(double mu, double s) {
  return [mu, s](std::span<const double>, double) { return std::pair{mu, s}; };
}

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  // composite Simpson, n even
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("mu=0, s=1 reduces exactly to Exponential(1)") {
  for (int i = 1; i <= 20; ++i) {
    const double x = 0.25 * i;
    CHECK(tpp::sl_cdf(x, 0.0, 1.0) ==
          doctest::Approx(1.0 - std::exp(-x)).epsilon(1e-9));
    CHECK(tpp::sl_logpdf(x, 0.0, 1.0) == doctest::Approx(-x).epsilon(1e-9));
  }
}

TEST_CASE("CDF limits and support") {
  CHECK(tpp::sl_cdf(1e-14, 0.3, 0.7) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(tpp::sl_cdf(1e3, 0.3, 0.7) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tpp::sl_cdf(-1.0, 0.3, 0.7) == 0.0);
  CHECK(tpp::sl_logpdf(-1.0, 0.3, 0.7) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(tpp::sl_logpdf(1.0, 0.0, -1.0), std::domain_error);
}

TEST_CASE("pdf integrates to 1 for random parameters") {
  // substitute x = softplus(w): the integrand is smooth in w even when the
  // density has an (integrable) singularity at x = 0
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> umu(-1.5, 1.5), us(0.2, 2.0);
  for (int rep = 0; rep < 5; ++rep) {
    const double mu = umu(rng), s = us(rng);
    const double mass = simpson(
        [&](double w) {
          const double x = softplus(w);
          return std::exp(tpp::sl_logpdf(x, mu, s)) * sigmoid(w);
        },
        mu - 50.0 * s, mu + 50.0 * s, 40000);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("pdf is the derivative of the CDF") {
  const double mu = 0.4, s = 0.8, h = 1e-6;
  for (double x : {0.3, 1.0, 2.5}) {
    const double fd = (tpp::sl_cdf(x + h, mu, s) - tpp::sl_cdf(x - h, mu, s)) / (2 * h);
    CHECK(std::exp(tpp::sl_logpdf(x, mu, s)) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("truncated pdf: large t_max recovers the untruncated density") {
  CHECK(tpp::sl_truncated_logpdf(0.7, 0.2, 0.9, 1e6) ==
        doctest::Approx(tpp::sl_logpdf(0.7, 0.2, 0.9)).epsilon(1e-12));
  CHECK(tpp::sl_truncated_logpdf(1.5, 0.0, 1.0, 1.0) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("truncated Exp(1) density on (0,1]") {
  for (double x : {0.1, 0.5, 0.99}) {
    const double expected = std::log(std::exp(-x) / (1.0 - std::exp(-1.0)));
    CHECK(tpp::sl_truncated_logpdf(x, 0.0, 1.0, 1.0) ==
          doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("truncated pdf integrates to 1") {
  for (auto [mu, s, t_max] : {std::tuple{0.0, 1.0, 1.0}, {0.5, 0.4, 0.8},
                              {-0.7, 1.3, 2.0}}) {
    const double w_hi = std::min(inv_softplus(t_max), mu + 50.0 * s);
    const double mass = simpson(
        [&, mu = mu, s = s, t_max = t_max](double w) {
          const double x = softplus(w);
          return std::exp(tpp::sl_truncated_logpdf(x, mu, s, t_max)) * sigmoid(w);
        },
        mu - 50.0 * s, w_hi, 40000);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("inverse-CDF sampling passes a KS test at the 1% level") {
  const double mu = 0.3, s = 0.9;
  const int n = 100000;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xs(n);
  for (auto& x : xs) x = tpp::sl_sample(mu, s, std::clamp(u(rng), 1e-12, 1 - 1e-12));
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = tpp::sl_cdf(xs[static_cast<std::size_t>(i)], mu, s);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
  }
  CHECK(d < 1.628 / std::sqrt(static_cast<double>(n)));  // 1% critical value
}

TEST_CASE("truncated sampling stays within support and matches the CDF") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double mu = -0.2, s = 0.6, t_max = 1.0;
  for (int i = 0; i < 2000; ++i) {
    const double x = tpp::sl_truncated_sample(mu, s, t_max, u(rng));
    CHECK(x > 0.0);
    CHECK(x <= t_max);
  }
}

TEST_CASE("Poisson prior log-density") {
  CHECK(tpp::prior_logp(1.5, 2.0, 0) == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(tpp::prior_logp(2.0, 1.0, 3) ==
        doctest::Approx(3.0 * std::log(2.0) - 2.0).epsilon(1e-12));
}

TEST_CASE("Poisson prior normalizes over the ordered point sets") {
  for (double lt : {0.5, 2.0, 5.0}) {
    const double lambda = lt, t_end = 1.0;
    double mass = 0.0;
    double log_vol = 0.0;  // log(t_end^M / M!)
    for (int m = 0; m <= 50; ++m) {
      if (m > 0) log_vol += std::log(t_end) - std::log(static_cast<double>(m));
      mass += std::exp(tpp::prior_logp(lambda, t_end, static_cast<std::size_t>(m)) +
                       log_vol);
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("sampler: truncation forces at least 9 points when t_end = 10*t_max") {
  const double t_max = 1.0, t_end = 10.0;
  auto h = dummy_h(t_end);
  auto nets = const_nets(inv_softplus(0.9), 0.2);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  for (int rep = 0; rep < 200; ++rep) {
    auto unif = [&] { return u(rng); };
    auto t = tpp::sample_posterior(h, nets, t_end, t_max, unif);
    CHECK(t.count() >= 9);
    CHECK(std::is_sorted(t.times.begin(), t.times.end()));
    for (std::size_t i = 1; i < t.times.size(); ++i)
      CHECK(t.times[i] - t.times[i - 1] <= t_max);
  }
}

TEST_CASE("sampler: empty-set branch records the survival probability") {
  const double t_end = 0.5, t_max = 1.0;
  auto h = dummy_h(t_end);
  auto nets = const_nets(inv_softplus(0.9), 0.05);  // gaps concentrate near 0.9
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  bool saw_empty = false;
  for (int rep = 0; rep < 100 && !saw_empty; ++rep) {
    auto unif = [&] { return u(rng); };
    auto t = tpp::sample_posterior(h, nets, t_end, t_max, unif);
    if (t.count() == 0) {
      saw_empty = true;
      const auto [mu, s] = nets({}, 0.0);
      CHECK(t.log_q ==
            doctest::Approx(tpp::sl_truncated_log_survival(t_end, mu, s, t_max))
                .epsilon(1e-12));
    }
  }
  CHECK(saw_empty);
}

TEST_CASE("Exp(1)-reducing sampler produces Poisson(1) counts") {
  const double t_end = 1.0, t_max = 50.0;
  auto h = dummy_h(t_end);
  auto nets = const_nets(0.0, 1.0);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  const int n = 100000;
  int zeros = 0;
  for (int rep = 0; rep < n; ++rep) {
    auto unif = [&] { return u(rng); };
    zeros += tpp::sample_posterior(h, nets, t_end, t_max, unif).count() == 0;
  }
  const double p0 = static_cast<double>(zeros) / n;
  const double expect = std::exp(-1.0);
  const double se = std::sqrt(expect * (1 - expect) / n);
  CHECK(std::abs(p0 - expect) <= 3.0 * se);
}

TEST_CASE("logq matches the sampler's recorded log-density") {
  const double t_end = 10.0, t_max = 1.0;
  auto h = dummy_h(t_end);
  auto nets = const_nets(-0.3, 0.5);
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  for (int rep = 0; rep < 50; ++rep) {
    auto unif = [&] { return u(rng); };
    auto t = tpp::sample_posterior(h, nets, t_end, t_max, unif);
    CHECK(tpp::logq(t.times, h, nets, t_end, t_max) ==
          doctest::Approx(t.log_q).epsilon(1e-10));
  }
}

TEST_CASE("logq rejects unordered times") {
  const double t_end = 10.0, t_max = 1.0;
  auto h = dummy_h(t_end);
  auto nets = const_nets(-0.3, 0.5);
  CHECK(tpp::logq(std::vector<double>{0.9, 0.4}, h, nets, t_end, t_max) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("logq on the Exp(1) reduction: single point at 0.5, t_end=1") {
  const double t_end = 1.0, t_max = 1e6;
  auto h = dummy_h(t_end);
  auto nets = const_nets(0.0, 1.0);
  // log f(0.5) + log P(gap > 0.5) = -0.5 + -0.5 = -1
  CHECK(tpp::logq(std::vector<double>{0.5}, h, nets, t_end, t_max) ==
        doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("posterior is a proper density on the M<=2 toy") {
  const double t_end = 0.8, t_max = 1.0;
  auto h = dummy_h(t_end);
  auto nets = const_nets(inv_softplus(0.55), 0.1);
  auto q1 = [&](double t1) {
    return std::exp(tpp::logq(std::vector<double>{t1}, h, nets, t_end, t_max));
  };
  auto q2 = [&](double t1, double t2) {
    return std::exp(tpp::logq(std::vector<double>{t1, t2}, h, nets, t_end, t_max));
  };
  const double p0 = std::exp(tpp::logq({}, h, nets, t_end, t_max));
  const double p1 = simpson(q1, 1e-9, t_end - 1e-9, 2000);
  const int n = 600;
  double p2 = 0.0;
  const double hstep = t_end / n;
  for (int i = 1; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      p2 += q2(i * hstep, j * hstep) * hstep * hstep;
  CHECK(p0 + p1 + p2 == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("times-rate matches the closed-form Poisson KL") {
  // q: rate-2 Poisson process, p: rate-1, on [0,5]
  const double lq = 2.0, lp = 1.0, t_end = 5.0;
  std::mt19937_64 rng(31);
  std::exponential_distribution<double> exp_q(lq);
  const int n = 10000;
  double acc = 0.0, acc2 = 0.0;
  for (int rep = 0; rep < n; ++rep) {
    std::size_t m = 0;
    double t = exp_q(rng);
    while (t < t_end) {
      ++m;
      t += exp_q(rng);
    }
    const double log_q = static_cast<double>(m) * std::log(lq) - t_end * lq;
    const double bits = tpp::times_rate_bits(log_q, lp, t_end, m);
    acc += bits;
    acc2 += bits * bits;
  }
  const double mean = acc / n;
  const double se = std::sqrt((acc2 / n - mean * mean) / n);
  const double exact = t_end * (lq * std::log(lq / lp) - lq + lp) / kLn2;
  CHECK(std::abs(mean - exact) <= 3.0 * se);
}

TEST_CASE("times-rate expectation is non-negative under the model sampler") {
  const double t_end = 5.0, t_max = 1.0, lambda = 2.0;
  auto h = dummy_h(t_end);
  auto nets = const_nets(-0.5, 0.4);
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  const int n = 10000;
  double acc = 0.0, acc2 = 0.0;
  for (int rep = 0; rep < n; ++rep) {
    auto unif = [&] { return u(rng); };
    auto t = tpp::sample_posterior(h, nets, t_end, t_max, unif);
    const double bits = tpp::times_rate_bits(t.log_q, lambda, t_end, t.count());
    acc += bits;
    acc2 += bits * bits;
  }
  const double mean = acc / n;
  const double se = std::sqrt((acc2 / n - mean * mean) / n);
  CHECK(mean >= -3.0 * se);
}
