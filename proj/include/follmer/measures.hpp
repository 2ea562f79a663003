#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "follmer/parallel.hpp"
#include "follmer/rng.hpp"
#include "follmer/stats.hpp"
#include "follmer/types.hpp"

namespace follmer {

enum class MeasureKind { GaussianMixture, FinitePointSet };

template <typename Scalar>
struct Component {
  Scalar weight{1};
  VectorX<Scalar> mean;
  /// Symmetric PSD; the zero matrix encodes a point mass.
  MatrixX<Scalar> covariance;
};

/// Relative entropy or Fisher information against N(0, I_d).
template <typename Scalar>
struct InformationValue {
  Scalar value{0};
  Scalar std_error{0};
  Index n{0};
  bool exact{false};
  bool infinite{false};
};

/// Finite Gaussian mixture on R^d, possibly with degenerate components.
///
/// Each covariance is diagonalised once at construction; every density,
/// score and posterior query afterwards is O(K d^2) (O(K d) when the
/// covariance is diagonal).
template <typename Scalar>
class Mixture {
 public:
  struct Spectral {
    VectorX<Scalar> eigenvalues;  // clamped to >= 0
    MatrixX<Scalar> basis;        // unused when axis_aligned
    bool axis_aligned{true};
  };

  explicit Mixture(std::vector<Component<Scalar>> components) : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("mixture needs at least one component");
    dim_ = components_.front().mean.size();
    if (dim_ < 1) throw std::invalid_argument("mixture dimension must be positive");
    const Scalar weight_tol = std::max(Scalar(1e-12), Scalar(64) * std::numeric_limits<Scalar>::epsilon());
    Scalar total = 0;
    for (auto& c : components_) {
      if (c.mean.size() != dim_) throw std::invalid_argument("component mean has wrong dimension");
      if (c.covariance.size() == 0) c.covariance = MatrixX<Scalar>::Zero(dim_, dim_);
      if (c.covariance.rows() != dim_ || c.covariance.cols() != dim_)
        throw std::invalid_argument("component covariance has wrong shape");
      if (!(c.weight >= Scalar(0))) throw std::invalid_argument("mixture weights must be nonnegative");
      total += c.weight;
      spectra_.push_back(decompose(c.covariance, weight_tol));
    }
    if (std::abs(total - Scalar(1)) > weight_tol)
      throw std::invalid_argument("mixture weights must sum to 1");
    smooth_ = std::all_of(spectra_.begin(), spectra_.end(),
                          [](const Spectral& s) { return s.eigenvalues.minCoeff() > Scalar(0); });
    point_set_ = std::all_of(spectra_.begin(), spectra_.end(),
                             [](const Spectral& s) { return s.eigenvalues.maxCoeff() == Scalar(0); });
    cumulative_.resize(components_.size());
    Scalar acc = 0;
    for (std::size_t i = 0; i < components_.size(); ++i) cumulative_[i] = (acc += components_[i].weight);
  }

  static Mixture gaussian(VectorX<Scalar> mean, MatrixX<Scalar> covariance) {
    return Mixture({Component<Scalar>{Scalar(1), std::move(mean), std::move(covariance)}});
  }
  static Mixture standard_gaussian(Index d) {
    return gaussian(VectorX<Scalar>::Zero(d), MatrixX<Scalar>::Identity(d, d));
  }
  static Mixture point_mass(VectorX<Scalar> a) {
    const Index d = a.size();
    return gaussian(std::move(a), MatrixX<Scalar>::Zero(d, d));
  }
  /// One atom per row; uniform weights when `weights` is empty.
  static Mixture point_set(const MatrixX<Scalar>& points, VectorX<Scalar> weights = {}) {
    const Index n = points.rows();
    if (weights.size() == 0) weights = VectorX<Scalar>::Constant(n, Scalar(1) / Scalar(n));
    if (weights.size() != n) throw std::invalid_argument("point_set: weight count mismatch");
    std::vector<Component<Scalar>> comps;
    comps.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
      comps.push_back({weights(i), points.row(i).transpose(),
                       MatrixX<Scalar>::Zero(points.cols(), points.cols())});
    return Mixture(std::move(comps));
  }

  [[nodiscard]] MeasureKind kind() const {
    return point_set_ ? MeasureKind::FinitePointSet : MeasureKind::GaussianMixture;
  }
  [[nodiscard]] Index dimension() const { return dim_; }
  [[nodiscard]] std::size_t size() const { return components_.size(); }
  [[nodiscard]] const std::vector<Component<Scalar>>& components() const { return components_; }
  [[nodiscard]] const Spectral& spectral(std::size_t i) const { return spectra_[i]; }
  /// Every covariance positive definite, i.e. mu has a smooth density.
  [[nodiscard]] bool is_smooth() const { return smooth_; }
  [[nodiscard]] bool is_single_gaussian() const { return components_.size() == 1; }

  [[nodiscard]] VectorX<Scalar> mean() const {
    VectorX<Scalar> m = VectorX<Scalar>::Zero(dim_);
    for (const auto& c : components_) m += c.weight * c.mean;
    return m;
  }
  [[nodiscard]] MatrixX<Scalar> covariance() const {
    const VectorX<Scalar> m = mean();
    MatrixX<Scalar> cov = MatrixX<Scalar>::Zero(dim_, dim_);
    for (const auto& c : components_) {
      const VectorX<Scalar> dm = c.mean - m;
      cov += c.weight * (c.covariance + dm * dm.transpose());
    }
    return cov;
  }
  /// E|X|^2
  [[nodiscard]] Scalar second_moment() const {
    Scalar s = 0;
    for (const auto& c : components_) s += c.weight * (c.mean.squaredNorm() + c.covariance.trace());
    return s;
  }
  /// E|X - E X|^4, exact (Gaussian fourth moments per component).
  [[nodiscard]] Scalar centered_fourth_moment() const {
    const VectorX<Scalar> m = mean();
    Scalar s = 0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const auto& c = components_[i];
      const VectorX<Scalar> b = c.mean - m;
      const Scalar tr = c.covariance.trace();
      const Scalar tr2 = (c.covariance * c.covariance).trace();
      const Scalar bb = b.squaredNorm();
      const Scalar bSb = b.dot(c.covariance * b);
      // E|b+Y|^4 with Y ~ N(0,S): |b|^4 + 2|b|^2 tr S + 4 b'Sb + (tr S)^2 + 2 tr S^2
      s += c.weight * (bb * bb + Scalar(2) * bb * tr + Scalar(4) * bSb + tr * tr + Scalar(2) * tr2);
    }
    return s;
  }

  /// Index of the component selected by a uniform draw u in [0,1).
  [[nodiscard]] std::size_t pick(Scalar u) const {
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto idx = static_cast<std::size_t>(it - cumulative_.begin());
    return std::min(idx, components_.size() - 1);
  }

  /// One draw from component `i`, consuming d normals from `engine`.
  VectorX<Scalar> draw_component(std::size_t i, CounterEngine& engine) const {
    VectorX<Scalar> z(dim_);
    fill_standard_normal(engine, z);
    const Spectral& sp = spectra_[i];
    const VectorX<Scalar> scaled = sp.eigenvalues.array().sqrt() * z.array();
    if (sp.axis_aligned) return components_[i].mean + scaled;
    return components_[i].mean + sp.basis * scaled;
  }

  VectorX<Scalar> draw(CounterEngine& engine) const {
    const std::size_t i = components_.size() == 1 ? 0 : pick(uniform01<Scalar>(engine));
    return draw_component(i, engine);
  }

  /// n i.i.d. draws, row j from substream (j, 0).
  [[nodiscard]] SampleMatrix<Scalar> sample(Index n, const RandomStream& stream) const {
    if (n < 0) throw std::invalid_argument("sample: negative count");
    SampleMatrix<Scalar> out(n, dim_);
    parallel_for(n, [&](Index b, Index e) {
      for (Index j = b; j < e; ++j) {
        CounterEngine engine = stream.engine(static_cast<std::uint64_t>(j));
        out.row(j) = draw(engine).transpose();
      }
    });
    return out;
  }

 private:
  static Spectral decompose(const MatrixX<Scalar>& cov, Scalar tol) {
    const Scalar scale = std::max(Scalar(1), cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > tol * scale)
      throw std::invalid_argument("covariance must be symmetric");
    Spectral sp;
    const MatrixX<Scalar> off = cov - MatrixX<Scalar>(cov.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() == Scalar(0)) {
      sp.eigenvalues = cov.diagonal();
      sp.axis_aligned = true;
    } else {
      Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(cov);
      sp.eigenvalues = solver.eigenvalues();
      sp.basis = solver.eigenvectors();
      sp.axis_aligned = false;
    }
    if (sp.eigenvalues.minCoeff() < -tol * scale)
      throw std::invalid_argument("covariance must be positive semidefinite");
    sp.eigenvalues = sp.eigenvalues.cwiseMax(Scalar(0));
    return sp;
  }

  std::vector<Component<Scalar>> components_;
  std::vector<Spectral> spectra_;
  std::vector<Scalar> cumulative_;
  Index dim_{0};
  bool smooth_{false};
  bool point_set_{false};
};

/// Conditional law of X given Y = x, plus responsibilities.
template <typename Scalar>
struct PosteriorMoments {
  VectorX<Scalar> mean;
  Scalar covariance_trace{0};
  MatrixX<Scalar> covariance;  // filled only on request
};

/// The law of Y = a X + sqrt(s) Z with X ~ mu and Z ~ N(0, I) independent,
/// itself a Gaussian mixture with means a m_i and covariances a^2 S_i + s I.
///
/// The Föllmer marginal p_t is (a, s) = (t, t(1-t)); the Slepian interpolation
/// S_t mu is (sqrt t, 1-t); mu itself is (1, 0) when smooth. All evaluations
/// run in log space.
template <typename Scalar>
class SmoothedMixture {
 public:
  SmoothedMixture(const Mixture<Scalar>& mu, Scalar a, Scalar s) : mu_(&mu), a_(a), s_(s) {
    const std::size_t k = mu.size();
    var_.reserve(k);
    log_norm_.resize(k);
    const Scalar log2pi = std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
    for (std::size_t i = 0; i < k; ++i) {
      VectorX<Scalar> c = (a * a) * mu.spectral(i).eigenvalues.array() + s;
      if (!(c.minCoeff() > Scalar(0)))
        throw std::domain_error("smoothed mixture has a singular component");
      const Scalar w = mu.components()[i].weight;
      log_norm_[i] = (w > Scalar(0) ? std::log(w) : -std::numeric_limits<Scalar>::infinity()) -
                     Scalar(0.5) * (c.array().log() + log2pi).sum();
      var_.push_back(std::move(c));
    }
  }

  [[nodiscard]] Index dimension() const { return mu_->dimension(); }

  [[nodiscard]] Scalar log_density(const VectorX<Scalar>& x) const {
    return log_sum_exp(component_log_densities(x));
  }

  /// Softmax of component log-densities at x.
  [[nodiscard]] VectorX<Scalar> responsibilities(const VectorX<Scalar>& x) const {
    VectorX<Scalar> l = component_log_densities(x);
    const Scalar lse = log_sum_exp(l);
    return (l.array() - lse).exp();
  }

  [[nodiscard]] VectorX<Scalar> score(const VectorX<Scalar>& x) const {
    VectorX<Scalar> l = component_log_densities(x);
    const Scalar lse = log_sum_exp(l);
    VectorX<Scalar> g = VectorX<Scalar>::Zero(x.size());
    for (std::size_t i = 0; i < mu_->size(); ++i) {
      const Scalar r = std::exp(l(static_cast<Index>(i)) - lse);
      if (r == Scalar(0)) continue;
      g -= r * rotate_back(i, whitened(i, x));
    }
    return g;
  }

  /// Moments of X given Y = x.
  [[nodiscard]] PosteriorMoments<Scalar> posterior(const VectorX<Scalar>& x, bool with_matrix = false) const {
    const Index d = x.size();
    VectorX<Scalar> l = component_log_densities(x);
    const Scalar lse = log_sum_exp(l);
    const std::size_t k = mu_->size();
    std::vector<VectorX<Scalar>> means(k);
    VectorX<Scalar> resp(static_cast<Index>(k));
    PosteriorMoments<Scalar> out;
    out.mean = VectorX<Scalar>::Zero(d);
    Scalar within = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const Scalar r = std::exp(l(static_cast<Index>(i)) - lse);
      resp(static_cast<Index>(i)) = r;
      const auto& sp = mu_->spectral(i);
      const VectorX<Scalar> y = rotate(i, x - a_ * mu_->components()[i].mean);
      // X | Y=x within component i: mean m_i + S_i a C_i^{-1}(x - a m_i), cov S_i s C_i^{-1}
      means[i] = mu_->components()[i].mean +
                 rotate_back(i, (a_ * sp.eigenvalues.array() * y.array() / var_[i].array()).matrix());
      if (r == Scalar(0)) continue;
      out.mean += r * means[i];
      within += r * (s_ * sp.eigenvalues.array() / var_[i].array()).sum();
    }
    Scalar between = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const Scalar r = resp(static_cast<Index>(i));
      if (r > Scalar(0)) between += r * (means[i] - out.mean).squaredNorm();
    }
    out.covariance_trace = within + between;
    if (with_matrix) {
      out.covariance = MatrixX<Scalar>::Zero(d, d);
      for (std::size_t i = 0; i < k; ++i) {
        const Scalar r = resp(static_cast<Index>(i));
        if (r == Scalar(0)) continue;
        const auto& sp = mu_->spectral(i);
        const VectorX<Scalar> diag = s_ * sp.eigenvalues.array() / var_[i].array();
        const VectorX<Scalar> dm = means[i] - out.mean;
        if (sp.axis_aligned)
          out.covariance += r * MatrixX<Scalar>(diag.asDiagonal());
        else
          out.covariance += r * (sp.basis * diag.asDiagonal() * sp.basis.transpose());
        out.covariance += r * dm * dm.transpose();
      }
    }
    return out;
  }

  /// Draws from X | Y = x: responsibility-weighted component, then its Gaussian posterior.
  VectorX<Scalar> draw_posterior(const VectorX<Scalar>& x, const VectorX<Scalar>& resp,
                                 CounterEngine& engine) const {
    std::size_t i = 0;
    if (mu_->size() > 1) {
      const Scalar u = uniform01<Scalar>(engine);
      Scalar acc = 0;
      i = mu_->size() - 1;
      for (std::size_t j = 0; j < mu_->size(); ++j) {
        acc += resp(static_cast<Index>(j));
        if (u < acc) {
          i = j;
          break;
        }
      }
    }
    const auto& sp = mu_->spectral(i);
    const VectorX<Scalar> y = rotate(i, x - a_ * mu_->components()[i].mean);
    VectorX<Scalar> z(x.size());
    fill_standard_normal(engine, z);
    const VectorX<Scalar> shift = (a_ * sp.eigenvalues.array() * y.array() / var_[i].array()).matrix();
    const VectorX<Scalar> noise =
        ((s_ * sp.eigenvalues.array() / var_[i].array()).sqrt() * z.array()).matrix();
    return mu_->components()[i].mean + rotate_back(i, shift + noise);
  }

 private:
  VectorX<Scalar> rotate(std::size_t i, const VectorX<Scalar>& r) const {
    const auto& sp = mu_->spectral(i);
    return sp.axis_aligned ? r : VectorX<Scalar>(sp.basis.transpose() * r);
  }
  VectorX<Scalar> rotate_back(std::size_t i, const VectorX<Scalar>& y) const {
    const auto& sp = mu_->spectral(i);
    return sp.axis_aligned ? y : VectorX<Scalar>(sp.basis * y);
  }
  /// C_i^{-1}(x - a m_i) in the component eigenbasis.
  VectorX<Scalar> whitened(std::size_t i, const VectorX<Scalar>& x) const {
    return rotate(i, x - a_ * mu_->components()[i].mean).array() / var_[i].array();
  }

  VectorX<Scalar> component_log_densities(const VectorX<Scalar>& x) const {
    if (x.size() != mu_->dimension()) throw std::invalid_argument("point has wrong dimension");
    const std::size_t k = mu_->size();
    VectorX<Scalar> l(static_cast<Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
      const VectorX<Scalar> y = rotate(i, x - a_ * mu_->components()[i].mean);
      l(static_cast<Index>(i)) = log_norm_[i] - Scalar(0.5) * (y.array().square() / var_[i].array()).sum();
    }
    return l;
  }

  static Scalar log_sum_exp(const VectorX<Scalar>& l) {
    const Scalar m = l.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((l.array() - m).exp().sum());
  }

  const Mixture<Scalar>* mu_;
  Scalar a_;
  Scalar s_;
  std::vector<VectorX<Scalar>> var_;
  std::vector<Scalar> log_norm_;
};

/// The Föllmer marginal law p_t of X_t = t xi + beta_t.
template <typename Scalar>
SmoothedMixture<Scalar> follmer_marginal(const Mixture<Scalar>& mu, Scalar t) {
  detail::require_open_unit(t, "follmer_marginal");
  return SmoothedMixture<Scalar>(mu, t, t * (Scalar(1) - t));
}

/// The view keeps a pointer to mu, so temporaries are refused.
template <typename Scalar>
SmoothedMixture<Scalar> follmer_marginal(const Mixture<Scalar>&&, Scalar) = delete;

/// The Slepian interpolation S_t mu, law of sqrt(t) xi + sqrt(1-t) Z.
template <typename Scalar>
SmoothedMixture<Scalar> slepian(const Mixture<Scalar>& mu, Scalar t) {
  detail::require_open_unit(t, "slepian");
  return SmoothedMixture<Scalar>(mu, std::sqrt(t), Scalar(1) - t);
}
template <typename Scalar>
SmoothedMixture<Scalar> slepian(const Mixture<Scalar>&&, Scalar) = delete;

/// log p_t(x)
template <typename Scalar>
Scalar density_pt(const Mixture<Scalar>& mu, Scalar t, const VectorX<Scalar>& x) {
  return follmer_marginal(mu, t).log_density(x);
}

/// grad log p_t(x)
template <typename Scalar>
VectorX<Scalar> score_pt(const Mixture<Scalar>& mu, Scalar t, const VectorX<Scalar>& x) {
  return follmer_marginal(mu, t).score(x);
}

/// m(t, x) = E[X_1 | X_t = x], the mean of mu_{t,x}.
template <typename Scalar>
VectorX<Scalar> posterior_mean(const Mixture<Scalar>& mu, Scalar t, const VectorX<Scalar>& x) {
  return follmer_marginal(mu, t).posterior(x).mean;
}

/// trace Cov[X_1 | X_t = x]; trace(Gamma_t) is this divided by (1 - t).
template <typename Scalar>
Scalar posterior_cov_trace(const Mixture<Scalar>& mu, Scalar t, const VectorX<Scalar>& x) {
  return follmer_marginal(mu, t).posterior(x).covariance_trace;
}

template <typename Scalar>
MatrixX<Scalar> posterior_cov(const Mixture<Scalar>& mu, Scalar t, const VectorX<Scalar>& x) {
  return follmer_marginal(mu, t).posterior(x, true).covariance;
}

/// n draws from mu_{t,x}, row j from substream (j, 0).
template <typename Scalar>
SampleMatrix<Scalar> sample_posterior(const Mixture<Scalar>& mu, Scalar t, const VectorX<Scalar>& x,
                                      Index n, const RandomStream& stream) {
  const auto pt = follmer_marginal(mu, t);
  const VectorX<Scalar> resp = pt.responsibilities(x);
  SampleMatrix<Scalar> out(n, mu.dimension());
  parallel_for(n, [&](Index b, Index e) {
    for (Index j = b; j < e; ++j) {
      CounterEngine engine = stream.engine(static_cast<std::uint64_t>(j));
      out.row(j) = pt.draw_posterior(x, resp, engine).transpose();
    }
  });
  return out;
}

/// H(mu | gamma_d). Closed form for one nondegenerate Gaussian, +infinity for
/// singular mu, Monte Carlo over `n_mc` draws otherwise.
template <typename Scalar>
InformationValue<Scalar> entropy_vs_gaussian(const Mixture<Scalar>& mu, Index n_mc = 100000,
                                             const RandomStream& stream = RandomStream(0x48)) {
  InformationValue<Scalar> out;
  const Index d = mu.dimension();
  if (!mu.is_smooth()) {
    out.infinite = true;
    out.exact = true;
    out.value = std::numeric_limits<Scalar>::infinity();
    return out;
  }
  if (mu.is_single_gaussian()) {
    const auto& c = mu.components().front();
    const Scalar logdet = mu.spectral(0).eigenvalues.array().log().sum();
    out.value = Scalar(0.5) * (c.covariance.trace() - Scalar(d) - logdet + c.mean.squaredNorm());
    out.exact = true;
    return out;
  }
  const SmoothedMixture<Scalar> density(mu, Scalar(1), Scalar(0));
  const SampleMatrix<Scalar> xs = mu.sample(n_mc, stream);
  VectorX<Scalar> vals(n_mc);
  const Scalar log_gauss_norm = Scalar(0.5) * Scalar(d) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  parallel_for(n_mc, [&](Index b, Index e) {
    for (Index j = b; j < e; ++j) {
      const VectorX<Scalar> x = xs.row(j).transpose();
      vals(j) = density.log_density(x) + Scalar(0.5) * x.squaredNorm() + log_gauss_norm;
    }
  });
  const auto est = mean_estimate(vals);
  out.value = est.value;
  out.std_error = est.std_error;
  out.n = est.n;
  return out;
}

/// I(mu | gamma_d) = E|grad log(dmu/dgamma_d)|^2. For one Gaussian N(m, S):
/// tr(S + S^{-1} - 2I) + |m|^2.
template <typename Scalar>
InformationValue<Scalar> fisher_vs_gaussian(const Mixture<Scalar>& mu, Index n_mc = 100000,
                                            const RandomStream& stream = RandomStream(0x49)) {
  InformationValue<Scalar> out;
  if (!mu.is_smooth()) {
    out.infinite = true;
    out.exact = true;
    out.value = std::numeric_limits<Scalar>::infinity();
    return out;
  }
  if (mu.is_single_gaussian()) {
    const auto& c = mu.components().front();
    const VectorX<Scalar>& ev = mu.spectral(0).eigenvalues;
    out.value = (ev.array() + ev.array().inverse() - Scalar(2)).sum() + c.mean.squaredNorm();
    out.exact = true;
    return out;
  }
  const SmoothedMixture<Scalar> density(mu, Scalar(1), Scalar(0));
  const SampleMatrix<Scalar> xs = mu.sample(n_mc, stream);
  VectorX<Scalar> vals(n_mc);
  parallel_for(n_mc, [&](Index b, Index e) {
    for (Index j = b; j < e; ++j) {
      const VectorX<Scalar> x = xs.row(j).transpose();
      vals(j) = (density.score(x) + x).squaredNorm();
    }
  });
  const auto est = mean_estimate(vals);
  out.value = est.value;
  out.std_error = est.std_error;
  out.n = est.n;
  return out;
}

}  // namespace follmer
