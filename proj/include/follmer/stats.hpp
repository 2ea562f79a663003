#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace follmer {

/// Monte Carlo estimate with its standard error. Exact values carry std_error = 0.
template <typename Scalar>
struct Estimate {
  Scalar value{0};
  Scalar std_error{0};
  Eigen::Index n{0};

  /// |value - target| in units of standard error; 0/0 counts as 0.
  [[nodiscard]] Scalar z_score(Scalar target = Scalar(0)) const {
    const Scalar gap = std::abs(value - target);
    if (gap == Scalar(0)) return Scalar(0);
    if (std_error == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
    return gap / std_error;
  }

  /// z-score with the standard error floored at a few thousand ulps of the
  /// magnitudes involved, so that two exact values agreeing to rounding pass.
  [[nodiscard]] Scalar resolved_z(Scalar target = Scalar(0)) const {
    const Scalar floor =
        Scalar(1e4) * std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + std::abs(value) + std::abs(target));
    return std::abs(value - target) / std::max(std_error, floor);
  }

  [[nodiscard]] bool consistent_with(Scalar target, Scalar k_sigma) const { return resolved_z(target) <= k_sigma; }
};

/// Sample mean and standard error of the mean, two-pass.
template <typename Derived>
Estimate<typename Derived::Scalar> mean_estimate(const Eigen::DenseBase<Derived>& samples) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = samples.size();
  Estimate<Scalar> out;
  out.n = n;
  if (n == 0) return out;
  out.value = samples.derived().sum() / Scalar(n);
  if (n > 1) {
    const Scalar ss = (samples.derived().array() - out.value).square().sum();
    out.std_error = std::sqrt(ss / Scalar(n - 1) / Scalar(n));
  }
  return out;
}

/// Difference of independent estimates; errors add in quadrature.
template <typename Scalar>
Estimate<Scalar> difference(const Estimate<Scalar>& a, const Estimate<Scalar>& b) {
  return {a.value - b.value, std::hypot(a.std_error, b.std_error), std::min(a.n, b.n)};
}

}  // namespace follmer
