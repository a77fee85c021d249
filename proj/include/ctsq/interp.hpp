#pragma once

#include <vector>

namespace ctsq::interp {

enum class SplineKind { CubicNatural, Linear };

// Interpolating spline through (knot_times[k], knot_values[k][d]).
// Evaluation is linear in the knot values; weight_row exposes that linear
// map so callers can differentiate through an evaluation.
// Outside [first, last] the spline clamps to the boundary value.
class Spline {
 public:
  Spline() = default;

  static Spline fit(SplineKind kind, std::vector<double> knot_times,
                    std::vector<std::vector<double>> knot_values);

  std::vector<double> eval(double t) const;
  double eval_dim(double t, std::size_t d) const;

  // Weights w such that eval(t)[d] = sum_k w[k] * knot_values[k][d].
  // Sparse (two nonzeros) for linear, dense for cubic.
  std::vector<double> weight_row(double t) const;

  SplineKind kind() const { return kind_; }
  const std::vector<double>& knot_times() const { return times_; }
  const std::vector<std::vector<double>>& knot_values() const { return values_; }
  std::size_t num_knots() const { return times_.size(); }
  std::size_t dims() const { return values_.empty() ? 0 : values_[0].size(); }
  double t_first() const { return times_.front(); }
  double t_last() const { return times_.back(); }

 private:
  std::size_t segment(double t) const;
  void solve_tridiag(const std::vector<double>& rhs, std::vector<double>& out) const;

  SplineKind kind_ = SplineKind::Linear;
  std::vector<double> times_;
  std::vector<std::vector<double>> values_;  // K x D
  std::vector<std::vector<double>> m2_;      // K x D second derivatives (cubic)
  // tridiagonal system bands for the natural cubic interior equations
  std::vector<double> diag_, off_;
};

}  // namespace ctsq::interp
