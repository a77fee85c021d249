#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ctsq/interp.hpp"

namespace ctsq::tpp {

inline constexpr double kDefaultTMax = 1.0;

// SoftplusLogistic(mu, s): softplus of a logistic variable; support (0, inf),
// with closed-form pdf and CDF via g(x) = log(e^x - 1).
double sl_logpdf(double x, double mu, double s);
double sl_cdf(double x, double mu, double s);
double sl_sample(double mu, double s, double u);  // inverse-CDF, u in (0,1)

// Truncated to (0, t_max].
double sl_truncated_logpdf(double x, double mu, double s, double t_max);
double sl_truncated_sample(double mu, double s, double t_max, double u);
// log P(gap > r) under the truncated distribution; -inf when r >= t_max.
double sl_truncated_log_survival(double r, double mu, double s, double t_max);

// Homogeneous Poisson process density over ordered point sets:
// M*log(lambda) - t_end*lambda.
double prior_logp(double lambda, double t_end, std::size_t m);

// The sampled knot times, strictly increasing in (0, t_end).
struct DiscretizationSet {
  std::vector<double> times;
  double log_q = 0.0;
  std::size_t count() const { return times.size(); }
};

// (mu, s) of the inter-event distribution given the hidden state at the
// cursor time.
using GapNets =
    std::function<std::pair<double, double>(std::span<const double> h, double t)>;

// Autoregressive sampling: draw truncated gaps until one overshoots t_end;
// the overshoot contributes the survival term. While the remaining interval
// is >= t_max the survival probability is zero, so a point is always drawn.
DiscretizationSet sample_posterior(const interp::Spline& h, const GapNets& nets,
                                   double t_end, double t_max,
                                   const std::function<double()>& unif);

// Recomputed autoregressive log-density of exactly these times; -inf for
// times violating ordering or support.
double logq(std::span<const double> times, const interp::Spline& h,
            const GapNets& nets, double t_end, double t_max);

// Per-sample Monte-Carlo term of KL(q(T|x) || p(T)) in bits.
double times_rate_bits(double log_q, double lambda, double t_end, std::size_t m);

}  // namespace ctsq::tpp
