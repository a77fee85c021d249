#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace ctsq {

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kLn2 = 0.6931471805599453094;

inline double nats_to_bits(double nats) { return nats / kLn2; }

inline double norm_logpdf(double x, double mean, double var) {
  if (var <= 0.0) {
    return (x == mean) ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
  }
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

inline double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse standard-normal CDF. Acklam's rational approximation followed by
// one Halley step, giving close to full double precision.
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement
  const double e = norm_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

// log(sigmoid(x)) without overflow
inline double log_sigmoid(double x) { return -softplus(-x); }

// inverse softplus, g(x) = log(e^x - 1); uses expm1 for small x
inline double inv_softplus(double x) {
  if (x <= 0.0) throw std::domain_error("inv_softplus: x must be positive");
  if (x > 30.0) return x;
  return std::log(std::expm1(x));
}

inline double logit(double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("logit: u outside (0,1)");
  return std::log(u) - std::log1p(-u);
}

// 64-bit FNV-1a
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 14695981039346656037ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// splitmix64 mixer, used as a counter-based source of raw 64-bit words
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline double u64_to_unit_open(std::uint64_t x) {
  // (0,1) open interval, 53-bit resolution
  return (static_cast<double>(x >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// Counter-based standard normal draw keyed by (seed, a, b). Reproducible
// regardless of call order.
inline double counter_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t k = mix64(seed ^ mix64(a ^ mix64(b)));
  const double u1 = u64_to_unit_open(mix64(k ^ 0x1234567890ABCDEFULL));
  const double u2 = u64_to_unit_open(mix64(k ^ 0xFEDCBA0987654321ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return u64_to_unit_open(mix64(seed ^ mix64(a ^ mix64(b ^ 0x5bf03635ULL))));
}

}  // namespace ctsq
