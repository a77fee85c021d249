#include "ctsq/tpp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctsq/mathutil.hpp"

namespace ctsq::tpp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_scale(double s) {
  if (!(s > 0.0)) throw std::domain_error("SoftplusLogistic: scale must be positive");
}
}  // namespace

double sl_logpdf(double x, double mu, double s) {
  check_scale(s);
  if (!(x > 0.0)) return kNegInf;
  const double g = inv_softplus(x);
  const double u = (g - mu) / s;
  // logistic logpdf at g, minus log sigmoid(g) from the change of variables
  return -std::log(s) - u - 2.0 * softplus(-u) + softplus(-g);
}

double sl_cdf(double x, double mu, double s) {
  check_scale(s);
  if (!(x > 0.0)) return 0.0;
  return sigmoid((inv_softplus(x) - mu) / s);
}

double sl_sample(double mu, double s, double u) {
  check_scale(s);
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("sl_sample: u outside (0,1)");
  return softplus(mu + s * logit(u));
}

double sl_truncated_logpdf(double x, double mu, double s, double t_max) {
  if (!(t_max > 0.0)) throw std::domain_error("t_max must be positive");
  if (!(x > 0.0) || x > t_max) return kNegInf;
  return sl_logpdf(x, mu, s) - std::log(sl_cdf(t_max, mu, s));
}

double sl_truncated_sample(double mu, double s, double t_max, double u) {
  const double f_max = sl_cdf(t_max, mu, s);
  double up = u * f_max;
  if (up <= 0.0) up = std::numeric_limits<double>::min();
  return sl_sample(mu, s, up);
}

double sl_truncated_log_survival(double r, double mu, double s, double t_max) {
  if (r >= t_max) return kNegInf;
  if (r <= 0.0) return 0.0;
  const double f_max = sl_cdf(t_max, mu, s);
  const double f_r = sl_cdf(r, mu, s);
  const double mass = f_max - f_r;
  if (mass <= 0.0) return kNegInf;
  return std::log(mass) - std::log(f_max);
}

double prior_logp(double lambda, double t_end, std::size_t m) {
  if (!(lambda > 0.0) || !(t_end > 0.0))
    throw std::domain_error("prior_logp: lambda and t_end must be positive");
  return static_cast<double>(m) * std::log(lambda) - t_end * lambda;
}

DiscretizationSet sample_posterior(const interp::Spline& h, const GapNets& nets,
                                   double t_end, double t_max,
                                   const std::function<double()>& unif) {
  DiscretizationSet out;
  double cursor = 0.0;
  // hard cap keeps a badly initialized gap model from looping forever
  const std::size_t max_points =
      1000 + static_cast<std::size_t>(100.0 * t_end / t_max);
  while (true) {
    const auto [mu, s] = nets(h.eval(cursor), cursor);
    const double rem = t_end - cursor;
    double gap = sl_truncated_sample(mu, s, t_max, unif());
    if (gap >= rem) {
      if (rem < t_max) {
        // no further point before t_end: survival event
        out.log_q += sl_truncated_log_survival(rem, mu, s, t_max);
        break;
      }
      // survival is impossible while rem >= t_max; keep the point inside
      gap = std::min(std::nextafter(rem, 0.0), std::nextafter(t_max, 0.0));
    }
    out.log_q += sl_truncated_logpdf(gap, mu, s, t_max);
    cursor += gap;
    out.times.push_back(cursor);
    if (out.times.size() > max_points)
      throw std::runtime_error("sample_posterior: point budget exceeded");
  }
  return out;
}

double logq(std::span<const double> times, const interp::Spline& h,
            const GapNets& nets, double t_end, double t_max) {
  double cursor = 0.0;
  double acc = 0.0;
  for (double t : times) {
    const double gap = t - cursor;
    if (!(gap > 0.0) || gap > t_max || t >= t_end) return kNegInf;
    const auto [mu, s] = nets(h.eval(cursor), cursor);
    acc += sl_truncated_logpdf(gap, mu, s, t_max);
    cursor = t;
  }
  const double rem = t_end - cursor;
  if (rem >= t_max) return kNegInf;  // a further point would have been forced
  const auto [mu, s] = nets(h.eval(cursor), cursor);
  acc += sl_truncated_log_survival(rem, mu, s, t_max);
  return acc;
}

double times_rate_bits(double log_q, double lambda, double t_end, std::size_t m) {
  return (log_q - prior_logp(lambda, t_end, m)) / kLn2;
}

}  // namespace ctsq::tpp
