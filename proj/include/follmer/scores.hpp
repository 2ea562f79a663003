#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "follmer/grids.hpp"
#include "follmer/measures.hpp"
#include "follmer/parallel.hpp"
#include "follmer/rng.hpp"
#include "follmer/stats.hpp"

namespace follmer {

enum class ScoreKind { Exact, Perturbed, EmpiricalMixture };

inline const char* to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::Exact: return "exact";
    case ScoreKind::Perturbed: return "perturbed";
    case ScoreKind::EmpiricalMixture: return "empirical";
  }
  return "exact";
}

/// Controlled corruption of the exact score:
/// s_hat(x,t) = (1 + scale) grad log p_t(x) + bias + noise_amplitude * field(x,t),
/// where field is a fixed random trigonometric vector field drawn from noise_seed.
template <typename Scalar>
struct Perturbation {
  VectorX<Scalar> bias;  // empty means zero
  Scalar scale{0};
  Scalar noise_amplitude{0};
  std::uint64_t noise_seed{0};
  Index noise_modes{8};

  [[nodiscard]] bool is_constant_bias() const { return scale == Scalar(0) && noise_amplitude == Scalar(0); }
};

/// s_hat(x, t) = A(t) x + b(t).
template <typename Scalar>
struct AffineScore {
  MatrixX<Scalar> slope;
  VectorX<Scalar> offset;
};

/// An evaluable score estimate s_hat(x, t) for t in (0,1). Immutable and
/// shareable across threads.
template <typename Scalar>
class ScoreModel {
 public:
  static ScoreModel exact(Mixture<Scalar> mu) {
    ScoreModel s(ScoreKind::Exact, std::make_shared<const Mixture<Scalar>>(std::move(mu)));
    return s;
  }

  static ScoreModel perturbed(Mixture<Scalar> mu, Perturbation<Scalar> p) {
    ScoreModel s(ScoreKind::Perturbed, std::make_shared<const Mixture<Scalar>>(std::move(mu)));
    const Index d = s.base_->dimension();
    if (p.bias.size() == 0) p.bias = VectorX<Scalar>::Zero(d);
    if (p.bias.size() != d) throw std::invalid_argument("perturbation bias has wrong dimension");
    if (p.noise_amplitude != Scalar(0)) {
      if (p.noise_modes < 1) throw std::invalid_argument("noise field needs at least one mode");
      const RandomStream field(p.noise_seed);
      s.freq_.resize(p.noise_modes, d);
      s.coef_.resize(p.noise_modes, d);
      s.phase_.resize(p.noise_modes);
      s.rate_.resize(p.noise_modes);
      for (Index k = 0; k < p.noise_modes; ++k) {
        CounterEngine e = field.engine(static_cast<std::uint64_t>(k));
        VectorX<Scalar> w(d), c(d);
        fill_standard_normal(e, w);
        fill_standard_normal(e, c);
        s.freq_.row(k) = w.transpose();
        s.coef_.row(k) = c.transpose() / std::sqrt(Scalar(p.noise_modes));
        s.phase_(k) = Scalar(2) * std::numbers::pi_v<Scalar> * uniform01<Scalar>(e);
        s.rate_(k) = Scalar(4) * uniform01<Scalar>(e);
      }
    }
    s.perturbation_ = std::move(p);
    return s;
  }

  /// Exact score of the uniform empirical measure on the rows of `data`.
  static ScoreModel empirical(const MatrixX<Scalar>& data) {
    if (data.rows() < 1) throw std::invalid_argument("empirical score needs at least one data point");
    ScoreModel s(ScoreKind::EmpiricalMixture,
                 std::make_shared<const Mixture<Scalar>>(Mixture<Scalar>::point_set(data)));
    s.data_ = data;
    return s;
  }

  [[nodiscard]] ScoreKind kind() const { return kind_; }
  [[nodiscard]] Index dimension() const { return base_->dimension(); }
  /// The measure whose exact score underlies this model (the empirical measure for EmpiricalMixture).
  [[nodiscard]] const Mixture<Scalar>& base() const { return *base_; }
  [[nodiscard]] const Perturbation<Scalar>& perturbation() const { return perturbation_; }
  [[nodiscard]] const MatrixX<Scalar>& data() const { return data_; }

  [[nodiscard]] VectorX<Scalar> operator()(const VectorX<Scalar>& x, Scalar t) const {
    detail::require_open_unit(t, "score model");
    VectorX<Scalar> s = score_pt(*base_, t, x);
    if (kind_ != ScoreKind::Perturbed) return s;
    const auto& p = perturbation_;
    if (p.scale != Scalar(0)) s *= (Scalar(1) + p.scale);
    s += p.bias;
    if (p.noise_amplitude != Scalar(0)) {
      const VectorX<Scalar> arg = (freq_ * x).array() + rate_.array() * t + phase_.array();
      s += p.noise_amplitude * (coef_.transpose() * arg.array().sin().matrix());
    }
    return s;
  }

  /// Closed-form affine representation at time t, when one exists
  /// (single-Gaussian base without noise field).
  [[nodiscard]] std::optional<AffineScore<Scalar>> affine_at(Scalar t) const {
    detail::require_open_unit(t, "affine_at");
    if (!base_->is_single_gaussian()) return std::nullopt;
    if (kind_ == ScoreKind::Perturbed && perturbation_.noise_amplitude != Scalar(0)) return std::nullopt;
    const auto& c = base_->components().front();
    const Index d = base_->dimension();
    const MatrixX<Scalar> cov = t * t * c.covariance + t * (Scalar(1) - t) * MatrixX<Scalar>::Identity(d, d);
    const Eigen::LLT<MatrixX<Scalar>> llt(cov);
    AffineScore<Scalar> a;
    a.slope = -llt.solve(MatrixX<Scalar>::Identity(d, d));
    a.offset = llt.solve(VectorX<Scalar>(t * c.mean));
    if (kind_ == ScoreKind::Perturbed) {
      a.slope *= (Scalar(1) + perturbation_.scale);
      a.offset = (Scalar(1) + perturbation_.scale) * a.offset + perturbation_.bias;
    }
    return a;
  }

 private:
  ScoreModel(ScoreKind k, std::shared_ptr<const Mixture<Scalar>> base) : kind_(k), base_(std::move(base)) {}

  ScoreKind kind_;
  std::shared_ptr<const Mixture<Scalar>> base_;
  Perturbation<Scalar> perturbation_;
  MatrixX<Scalar> data_;
  MatrixX<Scalar> freq_, coef_;
  VectorX<Scalar> phase_, rate_;
};

/// Draws (xi, X_t) pairs with X_t = t xi + sqrt(t(1-t)) Z, row j from substream (j, 0).
template <typename Scalar>
struct MarginalDraws {
  SampleMatrix<Scalar> terminal;
  SampleMatrix<Scalar> noise;
  SampleMatrix<Scalar> value;
};

template <typename Scalar>
MarginalDraws<Scalar> sample_marginal(const Mixture<Scalar>& mu, Scalar t, Index n, const RandomStream& stream) {
  if (!(t >= Scalar(0) && t <= Scalar(1))) throw std::domain_error("sample_marginal: t must lie in [0,1]");
  const Index d = mu.dimension();
  MarginalDraws<Scalar> out{SampleMatrix<Scalar>(n, d), SampleMatrix<Scalar>(n, d), SampleMatrix<Scalar>(n, d)};
  const Scalar sd = std::sqrt(t * (Scalar(1) - t));
  parallel_for(n, [&](Index b, Index e) {
    for (Index j = b; j < e; ++j) {
      CounterEngine engine = stream.engine(static_cast<std::uint64_t>(j));
      const VectorX<Scalar> xi = mu.draw(engine);
      VectorX<Scalar> z(d);
      fill_standard_normal(engine, z);
      out.terminal.row(j) = xi.transpose();
      out.noise.row(j) = z.transpose();
      out.value.row(j) = (t * xi + sd * z).transpose();
    }
  });
  return out;
}

/// sum_{i<N} h_i E|grad log p_{t_i}(X_{t_i}) - s_hat(X_{t_i}, t_i)|^2 under the exact marginals.
/// The exact model returns 0 and a pure constant bias b returns sum h_i |b|^2, both analytically.
template <typename Scalar>
Estimate<Scalar> epsilon_score_squared(const ScoreModel<Scalar>& model, const Mixture<Scalar>& mu,
                                       const TimeGrid<Scalar>& grid, Index n_paths, const RandomStream& stream) {
  if (model.dimension() != mu.dimension()) throw std::invalid_argument("epsilon_score: dimension mismatch");
  Estimate<Scalar> out;
  out.n = n_paths;
  if (model.kind() == ScoreKind::Exact) return out;
  if (model.kind() == ScoreKind::Perturbed && model.perturbation().is_constant_bias()) {
    out.value = grid.sum_of_steps() * model.perturbation().bias.squaredNorm();
    return out;
  }
  Scalar var = 0;
  for (Index i = 0; i < grid.steps(); ++i) {
    const Scalar t = grid[i];
    detail::require_open_unit(t, "epsilon_score");
    const auto draws = sample_marginal(mu, t, n_paths, stream.fork(static_cast<std::uint64_t>(i)));
    const auto pt = follmer_marginal(mu, t);
    VectorX<Scalar> err(n_paths);
    parallel_for(n_paths, [&](Index b, Index e) {
      for (Index j = b; j < e; ++j) {
        const VectorX<Scalar> x = draws.value.row(j).transpose();
        err(j) = (pt.score(x) - model(x, t)).squaredNorm();
      }
    });
    const auto est = mean_estimate(err);
    out.value += grid.step(i) * est.value;
    var += grid.step(i) * grid.step(i) * est.std_error * est.std_error;
  }
  out.std_error = std::sqrt(var);
  return out;
}

/// Both sides of the denoising score-matching identity at time t, estimated
/// with common random numbers:
///   E|grad log p_t(X_t) - s_hat|^2
///     = E|-Z/sqrt(t(1-t)) - s_hat(xi_t)|^2 - E|-Z/sqrt(t(1-t)) - grad log p_t(xi_t)|^2.
template <typename Scalar>
struct ScoreMatchingGap {
  Estimate<Scalar> score_error;  // left-hand side
  Estimate<Scalar> denoising_gap;  // right-hand side
  Estimate<Scalar> residual;     // per-sample difference, CRN
  [[nodiscard]] bool passes(Scalar k_sigma = Scalar(4)) const {
    return residual.consistent_with(Scalar(0), k_sigma);
  }
};

template <typename Scalar>
ScoreMatchingGap<Scalar> score_matching_gap(const ScoreModel<Scalar>& model, const Mixture<Scalar>& mu, Scalar t,
                                            Index n, const RandomStream& stream) {
  detail::require_open_unit(t, "score_matching_gap");
  const auto draws = sample_marginal(mu, t, n, stream);
  const auto pt = follmer_marginal(mu, t);
  const Scalar sd = std::sqrt(t * (Scalar(1) - t));
  VectorX<Scalar> lhs(n), rhs(n), diff(n);
  parallel_for(n, [&](Index b, Index e) {
    for (Index j = b; j < e; ++j) {
      const VectorX<Scalar> x = draws.value.row(j).transpose();
      const VectorX<Scalar> target = -draws.noise.row(j).transpose() / sd;
      const VectorX<Scalar> s = pt.score(x);
      const VectorX<Scalar> sh = model(x, t);
      lhs(j) = (s - sh).squaredNorm();
      rhs(j) = (target - sh).squaredNorm() - (target - s).squaredNorm();
      diff(j) = lhs(j) - rhs(j);
    }
  });
  return {mean_estimate(lhs), mean_estimate(rhs), mean_estimate(diff)};
}

/// Tweedie regression: with X_t = t xi + sqrt(t(1-t)) Z, E[-Z/sqrt(t(1-t)) | X_t] equals
/// grad log p_t(X_t). Draws are binned on quantiles of coordinate `coord` of X_t; each
/// bin reports the mean residual -Z_c/sqrt(t(1-t)) - score_c(X_t), which should vanish.
template <typename Scalar>
struct TweedieBin {
  Scalar lower, upper;
  Estimate<Scalar> residual;
};

template <typename Scalar>
std::vector<TweedieBin<Scalar>> tweedie_residuals(const Mixture<Scalar>& mu, Scalar t, Index bins, Index n,
                                                  const RandomStream& stream, Index coord = 0) {
  detail::require_open_unit(t, "tweedie_residuals");
  if (bins < 1 || n < bins) throw std::invalid_argument("tweedie_residuals: need n >= bins >= 1");
  const auto draws = sample_marginal(mu, t, n, stream);
  const auto pt = follmer_marginal(mu, t);
  const Scalar sd = std::sqrt(t * (Scalar(1) - t));
  VectorX<Scalar> r(n);
  parallel_for(n, [&](Index b, Index e) {
    for (Index j = b; j < e; ++j)
      r(j) = -draws.noise(j, coord) / sd - pt.score(VectorX<Scalar>(draws.value.row(j).transpose()))(coord);
  });
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return draws.value(a, coord) < draws.value(b, coord); });
  std::vector<TweedieBin<Scalar>> out;
  for (Index k = 0; k < bins; ++k) {
    const Index lo = k * n / bins, hi = (k + 1) * n / bins;
    VectorX<Scalar> part(hi - lo);
    for (Index j = lo; j < hi; ++j) part(j - lo) = r(order[static_cast<std::size_t>(j)]);
    out.push_back({draws.value(order[static_cast<std::size_t>(lo)], coord),
                   draws.value(order[static_cast<std::size_t>(hi - 1)], coord), mean_estimate(part)});
  }
  return out;
}

}  // namespace follmer
