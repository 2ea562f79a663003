#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "follmer/grids.hpp"
#include "follmer/parallel.hpp"
#include "follmer/rng.hpp"
#include "follmer/scores.hpp"

namespace follmer {

enum class Scheme { EM, Ada, Ddpm };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::EM: return "em";
    case Scheme::Ada: return "ada";
    case Scheme::Ddpm: return "ddpm";
  }
  return "em";
}

/// Hyper-parameters of the generic DDPM recursion
///   x_{i+1} = (x_i + eta_i s_i(x_i) + sigma_i Z_i) / sqrt(alpha_i).
/// alpha has N+1 entries (alpha_N only enters alpha_bar), eta and sigma have N.
template <typename Scalar>
struct DdpmParams {
  VectorX<Scalar> alpha;
  VectorX<Scalar> eta;
  VectorX<Scalar> sigma;

  [[nodiscard]] Index steps() const { return eta.size(); }

  /// alpha_bar_i = prod_{j >= i} alpha_j.
  [[nodiscard]] VectorX<Scalar> alpha_bar() const {
    VectorX<Scalar> bar(alpha.size());
    Scalar acc = 1;
    for (Index i = alpha.size() - 1; i >= 0; --i) bar(i) = (acc *= alpha(i));
    return bar;
  }

  void validate() const {
    if (alpha.size() != eta.size() + 1 || sigma.size() != eta.size())
      throw std::invalid_argument("ddpm params: need N+1 alphas and N etas/sigmas");
    for (Index i = 0; i < alpha.size(); ++i)
      if (!(alpha(i) > Scalar(0) && alpha(i) <= Scalar(1))) throw std::invalid_argument("ddpm params: alpha outside (0,1]");
    for (Index i = 0; i < eta.size(); ++i)
      if (!(sigma(i) >= Scalar(0))) throw std::invalid_argument("ddpm params: negative sigma");
  }
};

namespace detail {
template <typename Scalar>
VectorX<Scalar> grid_alphas(const TimeGrid<Scalar>& g) {
  const Index n = g.steps();
  VectorX<Scalar> alpha(n + 1);
  for (Index i = 0; i < n; ++i) alpha(i) = g[i] / g[i + 1];
  alpha(n) = g.t_final();
  return alpha;
}
}  // namespace detail

/// alpha_i = t_i/t_{i+1}, eta_i = 1 - alpha_i, sigma_i = sqrt(alpha_i (1 - alpha_i)), alpha_N = t_N.
template <typename Scalar>
DdpmParams<Scalar> params_standard(const TimeGrid<Scalar>& g) {
  DdpmParams<Scalar> p;
  p.alpha = detail::grid_alphas(g);
  const auto a = p.alpha.head(g.steps()).array();
  p.eta = Scalar(1) - a;
  p.sigma = (a * (Scalar(1) - a)).sqrt();
  return p;
}

/// Exponential-integrator choice: eta_i = 2(1 - sqrt(alpha_i)), sigma_i = sqrt(1 - alpha_i).
template <typename Scalar>
DdpmParams<Scalar> params_expint(const TimeGrid<Scalar>& g) {
  DdpmParams<Scalar> p;
  p.alpha = detail::grid_alphas(g);
  const auto a = p.alpha.head(g.steps()).array();
  p.eta = Scalar(2) * (Scalar(1) - a.sqrt());
  p.sigma = (Scalar(1) - a).sqrt();
  return p;
}

/// eta_i = 1 - alpha_i, sigma_i^2 = (1 - alpha_i)(alpha_i - alpha_bar_i)/(1 - alpha_bar_i).
/// Cross-checked against h_i t_i (1 - t_{i+1}) / (t_{i+1}^2 (1 - t_i)).
template <typename Scalar>
DdpmParams<Scalar> params_ada(const TimeGrid<Scalar>& g, Scalar tolerance = Scalar(1e-12)) {
  DdpmParams<Scalar> p;
  p.alpha = detail::grid_alphas(g);
  const Index n = g.steps();
  const VectorX<Scalar> bar = p.alpha_bar();
  p.eta = Scalar(1) - p.alpha.head(n).array();
  p.sigma.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar a = p.alpha(i);
    const Scalar var = (Scalar(1) - a) * (a - bar(i)) / (Scalar(1) - bar(i));
    const Scalar ti = g[i], tn = g[i + 1];
    const Scalar closed = g.step(i) * ti * (Scalar(1) - tn) / (tn * tn * (Scalar(1) - ti));
    if (std::abs(var - closed) > tolerance * std::max(std::abs(closed), Scalar(1) - a))
      throw NumericalInconsistency("params_ada: sigma^2 disagrees with its closed form at step " +
                                   std::to_string(i));
    p.sigma(i) = std::sqrt(std::max(var, Scalar(0)));
  }
  return p;
}

/// Initial law x_0 ~ N(0, scale^2 I).
template <typename Scalar>
struct DdpmInit {
  Scalar scale{1};
  static DdpmInit standard() { return {Scalar(1)}; }
  /// Matches X^ada_{t_0} / sqrt(t_0) ~ N(0, (1 - t_0) I).
  static DdpmInit ada(Scalar t0) { return {std::sqrt(Scalar(1) - t0)}; }
};

/// Terminal samples, and every intermediate state when requested.
template <typename Scalar>
struct SamplerRun {
  Scheme scheme{Scheme::EM};
  SampleMatrix<Scalar> terminal;
  std::vector<SampleMatrix<Scalar>> trajectory;  // N+1 entries when kept

  [[nodiscard]] Index paths() const { return terminal.rows(); }
};

/// Per-step score s_i(x) used by the DDPM recursion.
template <typename Scalar>
using StepScore = std::function<VectorX<Scalar>(Index, const VectorX<Scalar>&)>;

/// s_i(x) = sqrt(t_i) s_hat(sqrt(t_i) x, t_i): the score model moved to x = X/sqrt(t) coordinates.
template <typename Scalar>
StepScore<Scalar> ddpm_step_scores(const TimeGrid<Scalar>& g, const ScoreModel<Scalar>& s) {
  return [g, s](Index i, const VectorX<Scalar>& x) -> VectorX<Scalar> {
    const Scalar rt = std::sqrt(g[i]);
    return rt * s(VectorX<Scalar>(rt * x), g[i]);
  };
}

namespace detail {

/// Drives a per-path Markov recursion. Noise Z_i for path j comes from
/// substream (j, i), i = 0 for the initial draw; every scheme consumes noise
/// in this order so runs with one seed share their Gaussian draws bitwise.
template <typename Scalar, typename Init, typename Step>
SamplerRun<Scalar> run_recursion(Scheme scheme, Index steps, Index d, Index n, const RandomStream& stream,
                                 bool keep, Init&& init, Step&& step) {
  if (n < 0) throw std::invalid_argument("sampler: negative path count");
  SamplerRun<Scalar> run;
  run.scheme = scheme;
  run.terminal.resize(n, d);
  if (keep) run.trajectory.assign(static_cast<std::size_t>(steps + 1), SampleMatrix<Scalar>(n, d));
  parallel_for(n, [&](Index b, Index e) {
    VectorX<Scalar> z(d);
    for (Index j = b; j < e; ++j) {
      CounterEngine e0 = stream.engine(static_cast<std::uint64_t>(j), 0);
      fill_standard_normal(e0, z);
      VectorX<Scalar> x = init(z);
      if (keep) run.trajectory[0].row(j) = x.transpose();
      for (Index i = 0; i < steps; ++i) {
        CounterEngine ei = stream.engine(static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(i + 1));
        fill_standard_normal(ei, z);
        x = step(i, x, z);
        if (keep) run.trajectory[static_cast<std::size_t>(i + 1)].row(j) = x.transpose();
      }
      run.terminal.row(j) = x.transpose();
    }
  });
  return run;
}

}  // namespace detail

/// Euler-Maruyama on the Föllmer SDE with estimated score:
///   X_{t_0} = sqrt(t_0) Z_0,
///   X_{t_{i+1}} = X_{t_i} + (X_{t_i}/t_i + s_hat(X_{t_i}, t_i)) h_i + sqrt(h_i) Z_i.
template <typename Scalar>
SamplerRun<Scalar> run_em(const TimeGrid<Scalar>& g, const ScoreModel<Scalar>& s, Index n,
                          const RandomStream& stream, bool keep_trajectory = false) {
  const Scalar rt0 = std::sqrt(g.t0());
  return detail::run_recursion<Scalar>(
      Scheme::EM, g.steps(), s.dimension(), n, stream, keep_trajectory,
      [&](const VectorX<Scalar>& z) -> VectorX<Scalar> { return rt0 * z; },
      [&](Index i, const VectorX<Scalar>& x, const VectorX<Scalar>& z) -> VectorX<Scalar> {
        const Scalar t = g[i], h = g.step(i);
        return x + (x / t + s(x, t)) * h + std::sqrt(h) * z;
      });
}

/// Posterior-mean-only discretisation, the linear part solved exactly:
///   X_{t_0} = sqrt(t_0 (1 - t_0)) Z_0,
///   X_{t_{i+1}} = (t_{i+1}/t_i) X_{t_i} + h_i s_hat(X_{t_i}, t_i)
///                 + sqrt(h_i (1 - t_{i+1})/(1 - t_i)) Z_i.
template <typename Scalar>
SamplerRun<Scalar> run_ada(const TimeGrid<Scalar>& g, const ScoreModel<Scalar>& s, Index n,
                           const RandomStream& stream, bool keep_trajectory = false) {
  const Scalar init_sd = std::sqrt(g.t0() * (Scalar(1) - g.t0()));
  return detail::run_recursion<Scalar>(
      Scheme::Ada, g.steps(), s.dimension(), n, stream, keep_trajectory,
      [&](const VectorX<Scalar>& z) -> VectorX<Scalar> { return init_sd * z; },
      [&](Index i, const VectorX<Scalar>& x, const VectorX<Scalar>& z) -> VectorX<Scalar> {
        const Scalar t = g[i], tn = g[i + 1], h = g.step(i);
        return (tn / t) * x + h * s(x, t) + std::sqrt(h * (Scalar(1) - tn) / (Scalar(1) - t)) * z;
      });
}

/// The generic DDPM recursion with pluggable per-step scores.
template <typename Scalar>
SamplerRun<Scalar> run_ddpm(const DdpmParams<Scalar>& p, const StepScore<Scalar>& step_score, Index d, Index n,
                            const RandomStream& stream, DdpmInit<Scalar> init = DdpmInit<Scalar>::standard(),
                            bool keep_trajectory = false) {
  p.validate();
  return detail::run_recursion<Scalar>(
      Scheme::Ddpm, p.steps(), d, n, stream, keep_trajectory,
      [&](const VectorX<Scalar>& z) -> VectorX<Scalar> { return init.scale * z; },
      [&](Index i, const VectorX<Scalar>& x, const VectorX<Scalar>& z) -> VectorX<Scalar> {
        return (x + p.eta(i) * step_score(i, x) + p.sigma(i) * z) / std::sqrt(p.alpha(i));
      });
}

template <typename Scalar>
struct GaussianLaw {
  VectorX<Scalar> mean;
  MatrixX<Scalar> covariance;
};

namespace detail {
template <typename Scalar>
AffineScore<Scalar> require_affine(const ScoreModel<Scalar>& s, Scalar t) {
  auto a = s.affine_at(t);
  if (!a) throw std::invalid_argument("propagate_gaussian_law: score model is not affine");
  return *std::move(a);
}
}  // namespace detail

/// Exact terminal law of EM or ADA when s_hat(x, t) = A(t) x + b(t): every
/// step is an affine map plus independent Gaussian noise.
template <typename Scalar>
GaussianLaw<Scalar> propagate_gaussian_law(Scheme scheme, const TimeGrid<Scalar>& g, const ScoreModel<Scalar>& s) {
  const Index d = s.dimension();
  const MatrixX<Scalar> eye = MatrixX<Scalar>::Identity(d, d);
  GaussianLaw<Scalar> law{VectorX<Scalar>::Zero(d), MatrixX<Scalar>()};
  switch (scheme) {
    case Scheme::EM: law.covariance = g.t0() * eye; break;
    case Scheme::Ada: law.covariance = g.t0() * (Scalar(1) - g.t0()) * eye; break;
    case Scheme::Ddpm: throw std::invalid_argument("propagate_gaussian_law: use propagate_gaussian_law_ddpm");
  }
  for (Index i = 0; i < g.steps(); ++i) {
    const Scalar t = g[i], tn = g[i + 1], h = g.step(i);
    const AffineScore<Scalar> a = detail::require_affine(s, t);
    MatrixX<Scalar> map;
    Scalar noise;
    if (scheme == Scheme::EM) {
      map = eye + h * (eye / t + a.slope);
      noise = h;
    } else {
      map = (tn / t) * eye + h * a.slope;
      noise = h * (Scalar(1) - tn) / (Scalar(1) - t);
    }
    law.mean = map * law.mean + h * a.offset;
    law.covariance = map * law.covariance * map.transpose() + noise * eye;
    law.covariance = Scalar(0.5) * (law.covariance + law.covariance.transpose()).eval();
  }
  return law;
}

/// Exact terminal law of the DDPM recursion (x coordinates) with the grid's
/// per-step score mapping and an affine score model.
template <typename Scalar>
GaussianLaw<Scalar> propagate_gaussian_law_ddpm(const DdpmParams<Scalar>& p, const TimeGrid<Scalar>& g,
                                                const ScoreModel<Scalar>& s, DdpmInit<Scalar> init) {
  p.validate();
  if (p.steps() != g.steps()) throw std::invalid_argument("propagate_gaussian_law_ddpm: step count mismatch");
  const Index d = s.dimension();
  const MatrixX<Scalar> eye = MatrixX<Scalar>::Identity(d, d);
  GaussianLaw<Scalar> law{VectorX<Scalar>::Zero(d), init.scale * init.scale * eye};
  for (Index i = 0; i < p.steps(); ++i) {
    const Scalar t = g[i];
    const AffineScore<Scalar> a = detail::require_affine(s, t);
    // s_i(x) = t A x + sqrt(t) b
    const Scalar inv_root_alpha = Scalar(1) / std::sqrt(p.alpha(i));
    const MatrixX<Scalar> map = inv_root_alpha * (eye + p.eta(i) * t * a.slope);
    law.mean = map * law.mean + inv_root_alpha * p.eta(i) * std::sqrt(t) * a.offset;
    law.covariance = map * law.covariance * map.transpose() +
                     (p.sigma(i) * p.sigma(i) * inv_root_alpha * inv_root_alpha) * eye;
    law.covariance = Scalar(0.5) * (law.covariance + law.covariance.transpose()).eval();
  }
  return law;
}

}  // namespace follmer
