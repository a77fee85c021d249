#include "ctsq/interp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctsq::interp {

Spline Spline::fit(SplineKind kind, std::vector<double> knot_times,
                   std::vector<std::vector<double>> knot_values) {
  const std::size_t k = knot_times.size();
  if (k < 2) throw std::invalid_argument("Spline::fit: need at least 2 knots");
  if (knot_values.size() != k)
    throw std::invalid_argument("Spline::fit: times/values size mismatch");
  const std::size_t d = knot_values[0].size();
  for (const auto& v : knot_values)
    if (v.size() != d) throw std::invalid_argument("Spline::fit: ragged knot values");
  for (std::size_t i = 1; i < k; ++i)
    if (!(knot_times[i] > knot_times[i - 1]))
      throw std::invalid_argument("Spline::fit: knot times must be strictly increasing");

  Spline s;
  s.kind_ = kind;
  s.times_ = std::move(knot_times);
  s.values_ = std::move(knot_values);

  if (kind == SplineKind::CubicNatural && k > 2) {
    // Natural boundary: second derivative zero at both ends. Interior
    // equations form a symmetric tridiagonal system of size k-2.
    const std::size_t n = k - 2;
    s.diag_.resize(n);
    s.off_.resize(n > 0 ? n - 1 : 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double h0 = s.times_[i + 1] - s.times_[i];
      const double h1 = s.times_[i + 2] - s.times_[i + 1];
      s.diag_[i] = 2.0 * (h0 + h1);
      if (i + 1 < n) s.off_[i] = h1;
    }
    s.m2_.assign(k, std::vector<double>(d, 0.0));
    std::vector<double> rhs(n), sol(n);
    for (std::size_t dim = 0; dim < d; ++dim) {
      for (std::size_t i = 0; i < n; ++i) {
        const double h0 = s.times_[i + 1] - s.times_[i];
        const double h1 = s.times_[i + 2] - s.times_[i + 1];
        const double y0 = s.values_[i][dim];
        const double y1 = s.values_[i + 1][dim];
        const double y2 = s.values_[i + 2][dim];
        rhs[i] = 6.0 * ((y2 - y1) / h1 - (y1 - y0) / h0);
      }
      s.solve_tridiag(rhs, sol);
      for (std::size_t i = 0; i < n; ++i) s.m2_[i + 1][dim] = sol[i];
    }
  } else if (kind == SplineKind::CubicNatural) {
    s.m2_.assign(k, std::vector<double>(d, 0.0));  // 2 knots: straight line
  }
  return s;
}

// Thomas algorithm for the symmetric tridiagonal interior system.
void Spline::solve_tridiag(const std::vector<double>& rhs, std::vector<double>& out) const {
  const std::size_t n = diag_.size();
  out.assign(n, 0.0);
  if (n == 0) return;
  std::vector<double> c(n), r(n);
  c[0] = (n > 1) ? off_[0] / diag_[0] : 0.0;
  r[0] = rhs[0] / diag_[0];
  for (std::size_t i = 1; i < n; ++i) {
    const double m = diag_[i] - off_[i - 1] * c[i - 1];
    if (i + 1 < n) c[i] = off_[i] / m;
    r[i] = (rhs[i] - off_[i - 1] * r[i - 1]) / m;
  }
  out[n - 1] = r[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) out[i] = r[i] - c[i] * out[i + 1];
}

std::size_t Spline::segment(double t) const {
  // index i with times_[i] <= t < times_[i+1], clamped to valid segments
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t i = static_cast<std::size_t>(std::distance(times_.begin(), it));
  if (i == 0) return 0;
  if (i >= times_.size()) return times_.size() - 2;
  return i - 1;
}

double Spline::eval_dim(double t, std::size_t d) const {
  if (t <= times_.front()) return values_.front()[d];
  if (t >= times_.back()) return values_.back()[d];
  const std::size_t i = segment(t);
  const double h = times_[i + 1] - times_[i];
  const double sdt = t - times_[i];
  if (kind_ == SplineKind::Linear) {
    const double w = sdt / h;
    return (1.0 - w) * values_[i][d] + w * values_[i + 1][d];
  }
  const double a = (h - sdt) / h;
  const double b = sdt / h;
  const double c3 = ((h - sdt) * (h - sdt) * (h - sdt) / h - h * (h - sdt)) / 6.0;
  const double d3 = (sdt * sdt * sdt / h - h * sdt) / 6.0;
  return a * values_[i][d] + b * values_[i + 1][d] + c3 * m2_[i][d] + d3 * m2_[i + 1][d];
}

std::vector<double> Spline::eval(double t) const {
  std::vector<double> out(dims());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = eval_dim(t, d);
  return out;
}

std::vector<double> Spline::weight_row(double t) const {
  const std::size_t k = times_.size();
  std::vector<double> w(k, 0.0);
  if (t <= times_.front()) {
    w[0] = 1.0;
    return w;
  }
  if (t >= times_.back()) {
    w[k - 1] = 1.0;
    return w;
  }
  const std::size_t i = segment(t);
  const double h = times_[i + 1] - times_[i];
  const double sdt = t - times_[i];
  if (kind_ == SplineKind::Linear || k == 2) {
    w[i] = (h - sdt) / h;
    w[i + 1] = sdt / h;
    return w;
  }
  const double a = (h - sdt) / h;
  const double b = sdt / h;
  const double c3 = ((h - sdt) * (h - sdt) * (h - sdt) / h - h * (h - sdt)) / 6.0;
  const double d3 = (sdt * sdt * sdt / h - h * sdt) / 6.0;
  w[i] += a;
  w[i + 1] += b;

  // Contribution through the second derivatives: m2 = T^{-1} R y on the
  // interior, so the weight of m2_[j] spreads onto y via row j-1 of T^{-1}R.
  // T is symmetric, so row j of T^{-1} is the solve against e_j.
  const std::size_t n = k - 2;
  auto add_m2_row = [&](std::size_t knot_idx, double coef) {
    if (coef == 0.0) return;
    if (knot_idx == 0 || knot_idx == k - 1) return;  // natural ends: m2 = 0
    std::vector<double> e(n, 0.0), v;
    e[knot_idx - 1] = 1.0;
    solve_tridiag(e, v);
    for (std::size_t j = 0; j < n; ++j) {
      if (v[j] == 0.0) continue;
      const double h0 = times_[j + 1] - times_[j];
      const double h1 = times_[j + 2] - times_[j + 1];
      w[j] += coef * v[j] * (6.0 / h0);
      w[j + 1] += coef * v[j] * (-6.0 / h0 - 6.0 / h1);
      w[j + 2] += coef * v[j] * (6.0 / h1);
    }
  };
  add_m2_row(i, c3);
  add_m2_row(i + 1, d3);
  return w;
}

}  // namespace ctsq::interp
