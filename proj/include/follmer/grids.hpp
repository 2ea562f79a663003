#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "follmer/types.hpp"

namespace follmer {

enum class GridConstructor { UniformT, UniformTau, Explicit };

inline const char* to_string(GridConstructor c) {
  switch (c) {
    case GridConstructor::UniformT: return "uniform_t";
    case GridConstructor::UniformTau: return "uniform_tau";
    case GridConstructor::Explicit: return "explicit";
  }
  return "explicit";
}

/// How a grid was built, carried into reports.
struct GridProvenance {
  GridConstructor constructor{GridConstructor::Explicit};
  double t0{0};
  double delta{0};
  Index steps{0};
};

/// tau = T + (1/2) log t, the reverse-OU clock matching Föllmer time t.
template <typename Scalar>
Scalar tau_of_t(Scalar t, Scalar horizon) {
  if (!(t > Scalar(0) && t <= Scalar(1))) throw std::domain_error("tau_of_t: t must lie in (0,1]");
  return horizon + Scalar(0.5) * std::log(t);
}

template <typename Scalar>
Scalar t_of_tau(Scalar tau, Scalar horizon) {
  if (!(tau <= horizon)) throw std::domain_error("t_of_tau: tau must not exceed the horizon");
  return std::exp(Scalar(2) * (tau - horizon));
}

/// Discretisation times 0 < t_0 < ... < t_N <= 1.
template <typename Scalar>
class TimeGrid {
 public:
  explicit TimeGrid(VectorX<Scalar> t, GridProvenance provenance = {}) : t_(std::move(t)), prov_(provenance) {
    if (t_.size() < 2) throw std::invalid_argument("grid needs at least two points");
    if (!(t_(0) > Scalar(0))) throw std::invalid_argument("grid must start at t_0 > 0");
    if (t_(t_.size() - 1) > Scalar(1)) throw std::invalid_argument("grid must end at t_N <= 1");
    for (Index i = 0; i + 1 < t_.size(); ++i)
      if (!(t_(i + 1) > t_(i))) throw std::invalid_argument("grid must be strictly increasing");
    if (prov_.constructor == GridConstructor::Explicit) {
      prov_.t0 = static_cast<double>(t_(0));
      prov_.delta = static_cast<double>(delta());
      prov_.steps = steps();
    }
  }

  [[nodiscard]] const VectorX<Scalar>& points() const { return t_; }
  [[nodiscard]] Scalar operator[](Index i) const { return t_(i); }
  /// N, the number of steps.
  [[nodiscard]] Index steps() const { return t_.size() - 1; }
  [[nodiscard]] Scalar t0() const { return t_(0); }
  [[nodiscard]] Scalar t_final() const { return t_(steps()); }
  [[nodiscard]] Scalar step(Index i) const { return t_(i + 1) - t_(i); }
  [[nodiscard]] Scalar max_step() const {
    Scalar h = 0;
    for (Index i = 0; i < steps(); ++i) h = std::max(h, step(i));
    return h;
  }
  [[nodiscard]] Scalar sum_of_steps() const { return t_final() - t0(); }
  /// Early-stopping gap 1 - t_N.
  [[nodiscard]] Scalar delta() const { return Scalar(1) - t_final(); }
  /// T = -(1/2) log t_0, so that tau_0 = 0.
  [[nodiscard]] Scalar horizon() const { return Scalar(-0.5) * std::log(t0()); }
  [[nodiscard]] Scalar tau(Index i) const { return tau_of_t(t_(i), horizon()); }
  [[nodiscard]] const GridProvenance& provenance() const { return prov_; }

  /// Smallest kappa with h_i <= kappa (1 - t_{i+1}) for i = 0..N-1; infinite when t_N = 1.
  [[nodiscard]] Scalar kappa_a1() const {
    Scalar k = 0;
    for (Index i = 0; i < steps(); ++i) {
      const Scalar gap = Scalar(1) - t_(i + 1);
      if (gap <= Scalar(0)) return std::numeric_limits<Scalar>::infinity();
      k = std::max(k, step(i) / gap);
    }
    return k;
  }

  /// Smallest kappa with tau_{i+1} - tau_i <= kappa min{1, T - tau_{i+1}}.
  [[nodiscard]] Scalar kappa_tau() const {
    Scalar k = 0;
    for (Index i = 0; i < steps(); ++i) {
      const Scalar dtau = Scalar(0.5) * std::log(t_(i + 1) / t_(i));
      const Scalar remaining = Scalar(-0.5) * std::log(t_(i + 1));  // T - tau_{i+1}
      if (remaining <= Scalar(0)) return std::numeric_limits<Scalar>::infinity();
      k = std::max(k, dtau / std::min(Scalar(1), remaining));
    }
    return k;
  }

  /// Smallest kappa with h_i <= 6 kappa t_i.
  [[nodiscard]] Scalar kappa_sampling_r() const {
    Scalar k = 0;
    for (Index i = 0; i < steps(); ++i) k = std::max(k, step(i) / (Scalar(6) * t_(i)));
    return k;
  }

 private:
  VectorX<Scalar> t_;
  GridProvenance prov_;
};

namespace detail {
template <typename Scalar>
void check_grid_bounds(Scalar t0, Scalar delta, Index n, const char* who) {
  if (n < 1) throw std::invalid_argument(std::string(who) + ": N must be at least 1");
  if (!(delta >= Scalar(0) && delta < Scalar(1)))
    throw std::invalid_argument(std::string(who) + ": delta must lie in [0,1)");
  if (!(t0 > Scalar(0) && t0 < Scalar(1) - delta))
    throw std::invalid_argument(std::string(who) + ": need 0 < t0 < 1 - delta");
}
}  // namespace detail

/// Equidistant t on [t0, 1 - delta].
template <typename Scalar>
TimeGrid<Scalar> grid_uniform_t(Scalar t0, Scalar delta, Index n) {
  detail::check_grid_bounds(t0, delta, n, "grid_uniform_t");
  const Scalar end = Scalar(1) - delta;
  VectorX<Scalar> t(n + 1);
  for (Index i = 0; i <= n; ++i) t(i) = t0 + (end - t0) * Scalar(i) / Scalar(n);
  t(n) = end;
  return TimeGrid<Scalar>(std::move(t), {GridConstructor::UniformT, static_cast<double>(t0),
                                         static_cast<double>(delta), n});
}

/// Equidistant tau, i.e. geometric t: t_i = t0 ((1 - delta)/t0)^{i/N}.
template <typename Scalar>
TimeGrid<Scalar> grid_uniform_tau(Scalar t0, Scalar delta, Index n) {
  detail::check_grid_bounds(t0, delta, n, "grid_uniform_tau");
  const Scalar end = Scalar(1) - delta;
  const Scalar log_ratio = std::log(end / t0);
  VectorX<Scalar> t(n + 1);
  for (Index i = 0; i <= n; ++i) t(i) = t0 * std::exp(log_ratio * Scalar(i) / Scalar(n));
  t(0) = t0;
  t(n) = end;
  return TimeGrid<Scalar>(std::move(t), {GridConstructor::UniformTau, static_cast<double>(t0),
                                         static_cast<double>(delta), n});
}

/// Minimal constants for the step-size conditions a grid satisfies.
template <typename Scalar>
struct AssumptionFlags {
  Scalar kappa_a1;          // h_i <= kappa (1 - t_{i+1})
  Scalar kappa_tau;         // tau-spacing condition
  Scalar kappa_sampling_r;  // h_i <= 6 kappa t_i
  bool t0_at_most_half;

  [[nodiscard]] bool a1_holds(Scalar kappa) const { return kappa_a1 <= kappa; }
  [[nodiscard]] bool tau_condition_holds(Scalar kappa) const { return kappa_tau <= kappa; }
  [[nodiscard]] bool sampling_r_holds(Scalar kappa) const { return kappa_sampling_r <= kappa; }
};

template <typename Scalar>
AssumptionFlags<Scalar> check_assumptions(const TimeGrid<Scalar>& g) {
  return {g.kappa_a1(), g.kappa_tau(), g.kappa_sampling_r(), g.t0() <= Scalar(0.5)};
}

}  // namespace follmer
