#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "follmer/measures.hpp"
#include "follmer/parallel.hpp"
#include "follmer/rng.hpp"
#include "follmer/stats.hpp"

namespace follmer {

/// One exact Föllmer path on a time grid: values.row(k) = times(k) * terminal + bridge.row(k).
template <typename Scalar>
struct FollmerPath {
  VectorX<Scalar> times;
  MatrixX<Scalar> values;
  VectorX<Scalar> terminal;
  MatrixX<Scalar> bridge;
};

/// n exact Föllmer paths sharing a time grid, stored time-major.
template <typename Scalar>
struct FollmerEnsemble {
  VectorX<Scalar> times;
  SampleMatrix<Scalar> terminal;              // xi, one row per path
  std::vector<SampleMatrix<Scalar>> bridge;   // beta at times(k)

  [[nodiscard]] Index paths() const { return terminal.rows(); }
  [[nodiscard]] Index dimension() const { return terminal.cols(); }

  /// X at times(k) for every path.
  [[nodiscard]] SampleMatrix<Scalar> values(Index k) const {
    return times(k) * terminal + bridge[static_cast<std::size_t>(k)];
  }

  [[nodiscard]] FollmerPath<Scalar> path(Index j) const {
    const Index m = times.size();
    FollmerPath<Scalar> p{times, MatrixX<Scalar>(m, dimension()), terminal.row(j).transpose(),
                          MatrixX<Scalar>(m, dimension())};
    for (Index k = 0; k < m; ++k) {
      p.bridge.row(k) = bridge[static_cast<std::size_t>(k)].row(j);
      p.values.row(k) = times(k) * terminal.row(j) + bridge[static_cast<std::size_t>(k)].row(j);
    }
    return p;
  }
};

namespace detail {
template <typename Scalar>
void check_times(const VectorX<Scalar>& times) {
  for (Index k = 0; k < times.size(); ++k) {
    if (!(times(k) >= Scalar(0) && times(k) <= Scalar(1)))
      throw std::domain_error("follmer: times must lie in [0,1]");
    if (k > 0 && !(times(k) > times(k - 1))) throw std::invalid_argument("follmer: times must be increasing");
  }
}

/// Advances a standard Brownian bridge from (s, beta_s) to t > s:
/// beta_t | beta_s ~ N(beta_s (1-t)/(1-s), (t-s)(1-t)/(1-s) I).
template <typename Scalar>
void bridge_step(Scalar s, Scalar t, VectorX<Scalar>& beta, const VectorX<Scalar>& z) {
  const Scalar rest = Scalar(1) - s;
  beta = beta * ((Scalar(1) - t) / rest) + std::sqrt((t - s) * (Scalar(1) - t) / rest) * z;
}
}  // namespace detail

/// Exact joint law of X at the given times: xi ~ mu, beta a Brownian bridge
/// sampled by sequential conditioning, X_t = t xi + beta_t.
/// Path j draws xi from fork(0) substream (j, 0) and the bridge step k from fork(1) substream (j, k).
template <typename Scalar>
FollmerEnsemble<Scalar> simulate_follmer(const Mixture<Scalar>& mu, const VectorX<Scalar>& times, Index n_paths,
                                         const RandomStream& stream) {
  detail::check_times(times);
  const Index d = mu.dimension();
  FollmerEnsemble<Scalar> ens{times, SampleMatrix<Scalar>(n_paths, d),
                              std::vector<SampleMatrix<Scalar>>(static_cast<std::size_t>(times.size()),
                                                                SampleMatrix<Scalar>(n_paths, d))};
  const RandomStream terminal_stream = stream.fork(0), bridge_stream = stream.fork(1);
  parallel_for(n_paths, [&](Index b, Index e) {
    VectorX<Scalar> beta(d), z(d);
    for (Index j = b; j < e; ++j) {
      CounterEngine te = terminal_stream.engine(static_cast<std::uint64_t>(j));
      ens.terminal.row(j) = mu.draw(te).transpose();
      beta.setZero();
      Scalar s = 0;
      for (Index k = 0; k < times.size(); ++k) {
        const Scalar t = times(k);
        if (t > s) {
          CounterEngine be = bridge_stream.engine(static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k));
          fill_standard_normal(be, z);
          detail::bridge_step(s, t, beta, z);
          s = t;
        }
        ens.bridge[static_cast<std::size_t>(k)].row(j) = beta.transpose();
      }
    }
  });
  return ens;
}

/// The Föllmer drift v_t = X_t/t + grad log p_t(X_t), checked against
/// (m(t, X_t) - X_t)/(1 - t). Throws NumericalInconsistency when the two
/// differ by more than `tolerance` relative to the size of the cancelling terms.
template <typename Scalar>
VectorX<Scalar> follmer_drift(const SmoothedMixture<Scalar>& pt, Scalar t, const VectorX<Scalar>& x,
                              Scalar tolerance = Scalar(1e-6)) {
  const auto post = pt.posterior(x);
  const VectorX<Scalar> by_score = x / t + pt.score(x);
  const VectorX<Scalar> by_mean = (post.mean - x) / (Scalar(1) - t);
  const Scalar scale = std::max({Scalar(1), by_score.norm(), x.norm() / t});
  if ((by_score - by_mean).norm() > tolerance * scale)
    throw NumericalInconsistency("follmer drift: score and posterior-mean forms disagree at t=" +
                                 std::to_string(static_cast<double>(t)));
  return by_score;
}

template <typename Scalar>
struct DriftSample {
  Scalar t;
  VectorX<Scalar> v;
};

/// v along one path; t = 0 uses the convention v_0 = E[X_1], t = 1 is rejected.
template <typename Scalar>
std::vector<DriftSample<Scalar>> drift_along_path(const Mixture<Scalar>& mu, const FollmerPath<Scalar>& path) {
  std::vector<DriftSample<Scalar>> out;
  out.reserve(static_cast<std::size_t>(path.times.size()));
  for (Index k = 0; k < path.times.size(); ++k) {
    const Scalar t = path.times(k);
    if (t == Scalar(0)) {
      out.push_back({t, mu.mean()});
      continue;
    }
    const auto pt = follmer_marginal(mu, t);
    out.push_back({t, follmer_drift(pt, t, VectorX<Scalar>(path.values.row(k).transpose()))});
  }
  return out;
}

/// v at every time of an ensemble, one matrix per time.
template <typename Scalar>
std::vector<SampleMatrix<Scalar>> drift_along_ensemble(const Mixture<Scalar>& mu, const FollmerEnsemble<Scalar>& ens) {
  std::vector<SampleMatrix<Scalar>> out;
  const VectorX<Scalar> mean = mu.mean();
  for (Index k = 0; k < ens.times.size(); ++k) {
    const Scalar t = ens.times(k);
    SampleMatrix<Scalar> v(ens.paths(), ens.dimension());
    if (t == Scalar(0)) {
      v.rowwise() = mean.transpose();
    } else {
      const auto pt = follmer_marginal(mu, t);
      const SampleMatrix<Scalar> x = ens.values(k);
      parallel_for(ens.paths(), [&](Index b, Index e) {
        for (Index j = b; j < e; ++j) v.row(j) = follmer_drift(pt, t, VectorX<Scalar>(x.row(j).transpose())).transpose();
      });
    }
    out.push_back(std::move(v));
  }
  return out;
}

/// E|v_t|^2 two ways, from independent draws:
/// directly, and as (d - E tr Gamma_t)/(1 - t) + E|X_1|^2 - d with Gamma_t = Cov[X_1|X_t]/(1-t).
template <typename Scalar>
struct DriftEnergyCheck {
  Scalar t;
  Estimate<Scalar> direct;
  Estimate<Scalar> via_gamma;
  [[nodiscard]] Scalar z() const { return difference(direct, via_gamma).resolved_z(); }
  [[nodiscard]] bool agrees(Scalar k_sigma = Scalar(3)) const {
    return difference(direct, via_gamma).consistent_with(Scalar(0), k_sigma);
  }
};

namespace detail {
template <typename Scalar>
Estimate<Scalar> drift_energy(const Mixture<Scalar>& mu, Scalar t, Index n, const RandomStream& stream) {
  const Index d = mu.dimension();
  const auto pt = follmer_marginal(mu, t);
  const Scalar sd = std::sqrt(t * (Scalar(1) - t));
  VectorX<Scalar> vals(n);
  parallel_for(n, [&](Index b, Index e) {
    VectorX<Scalar> z(d);
    for (Index j = b; j < e; ++j) {
      CounterEngine engine = stream.engine(static_cast<std::uint64_t>(j));
      const VectorX<Scalar> xi = mu.draw(engine);
      fill_standard_normal(engine, z);
      const VectorX<Scalar> x = t * xi + sd * z;
      vals(j) = (x / t + pt.score(x)).squaredNorm();
    }
  });
  return mean_estimate(vals);
}
}  // namespace detail

template <typename Scalar>
DriftEnergyCheck<Scalar> expected_v_squared(const Mixture<Scalar>& mu, Scalar t, Index n_paths,
                                            const RandomStream& stream) {
  detail::require_open_unit(t, "expected_v_squared");
  const Index d = mu.dimension();
  DriftEnergyCheck<Scalar> out{t, detail::drift_energy(mu, t, n_paths, stream.fork(0)), {}};
  const auto pt = follmer_marginal(mu, t);
  const RandomStream gamma_stream = stream.fork(1);
  const Scalar sd = std::sqrt(t * (Scalar(1) - t));
  const Scalar m2 = mu.second_moment();
  const Scalar rest = Scalar(1) - t;
  VectorX<Scalar> vals(n_paths);
  parallel_for(n_paths, [&](Index b, Index e) {
    VectorX<Scalar> z(d);
    for (Index j = b; j < e; ++j) {
      CounterEngine engine = gamma_stream.engine(static_cast<std::uint64_t>(j));
      const VectorX<Scalar> xi = mu.draw(engine);
      fill_standard_normal(engine, z);
      const Scalar tr_gamma = pt.posterior(VectorX<Scalar>(t * xi + sd * z)).covariance_trace / rest;
      vals(j) = (Scalar(d) - tr_gamma) / rest + m2 - Scalar(d);
    }
  });
  out.via_gamma = mean_estimate(vals);
  return out;
}

/// Nodes for integrating t -> E|v_t|^2 over [0,1]: t = 0, then
/// t_i = 1 - (1 - t_min) ratio^{-i} until 1 - t_i <= end_gap.
template <typename Scalar>
struct EntropyQuadrature {
  Scalar t_min{Scalar(1e-3)};
  Scalar ratio{Scalar(1.25)};
  Scalar end_gap{Scalar(1e-4)};

  [[nodiscard]] VectorX<Scalar> nodes() const {
    if (!(t_min > Scalar(0) && t_min < Scalar(1) && ratio > Scalar(1) && end_gap > Scalar(0)))
      throw std::invalid_argument("entropy quadrature: bad parameters");
    std::vector<Scalar> t{Scalar(0)};
    for (Index i = 0;; ++i) {
      const Scalar gap = (Scalar(1) - t_min) * std::pow(ratio, -Scalar(i));
      t.push_back(Scalar(1) - gap);
      if (gap <= end_gap) break;
    }
    return Eigen::Map<VectorX<Scalar>>(t.data(), static_cast<Index>(t.size()));
  }
};

template <typename Scalar>
struct EntropyEstimate {
  Scalar value{0};
  Scalar std_error{0};  // Monte Carlo and quadrature, combined
  Scalar mc_error{0};
  Scalar quadrature_error{0};
  bool infinite{false};
  VectorX<Scalar> nodes;
  std::vector<Estimate<Scalar>> integrand;  // E|v_t|^2 at each node
  VectorX<Scalar> partial;                  // (1/2) int_0^{t_k} E|v_t|^2 dt
};

/// H(mu | gamma_d) = (1/2) int_0^1 E|v_t|^2 dt by trapezoid quadrature on a
/// grid graded toward t = 1, with a flat tail on [t_K, 1]. Singular mu is
/// flagged infinite; its partial integrals are still reported.
template <typename Scalar>
EntropyEstimate<Scalar> entropy_via_drift(const Mixture<Scalar>& mu, const EntropyQuadrature<Scalar>& quad,
                                          Index n_paths, const RandomStream& stream) {
  EntropyEstimate<Scalar> out;
  out.nodes = quad.nodes();
  const Index m = out.nodes.size();
  out.infinite = !mu.is_smooth();
  for (Index k = 0; k < m; ++k) {
    const Scalar t = out.nodes(k);
    if (t == Scalar(0)) {
      out.integrand.push_back({mu.mean().squaredNorm(), Scalar(0), n_paths});
    } else {
      out.integrand.push_back(detail::drift_energy(mu, t, n_paths, stream.fork(static_cast<std::uint64_t>(k))));
    }
  }
  // weights of the trapezoid rule on nodes[0..m-1] plus the flat tail
  VectorX<Scalar> w = VectorX<Scalar>::Zero(m);
  out.partial = VectorX<Scalar>::Zero(m);
  for (Index k = 0; k + 1 < m; ++k) {
    const Scalar h = out.nodes(k + 1) - out.nodes(k);
    w(k) += Scalar(0.5) * h;
    w(k + 1) += Scalar(0.5) * h;
    out.partial(k + 1) = out.partial(k) + Scalar(0.25) * h * (out.integrand[k].value + out.integrand[k + 1].value);
  }
  w(m - 1) += Scalar(1) - out.nodes(m - 1);
  Scalar value = 0, var = 0;
  for (Index k = 0; k < m; ++k) {
    value += w(k) * out.integrand[k].value;
    var += w(k) * w(k) * out.integrand[k].std_error * out.integrand[k].std_error;
  }
  // coarse rule on every other node, for the quadrature error
  Scalar coarse = 0;
  Index prev = 0;
  for (Index k = 2; k < m; k += 2) {
    coarse += Scalar(0.5) * (out.nodes(k) - out.nodes(prev)) * (out.integrand[prev].value + out.integrand[k].value);
    prev = k;
  }
  if (prev != m - 1)
    coarse += Scalar(0.5) * (out.nodes(m - 1) - out.nodes(prev)) *
              (out.integrand[prev].value + out.integrand[m - 1].value);
  coarse += (Scalar(1) - out.nodes(m - 1)) * out.integrand[m - 1].value;
  out.value = Scalar(0.5) * value;
  out.mc_error = Scalar(0.5) * std::sqrt(var);
  out.quadrature_error = Scalar(0.5) * std::abs(value - coarse) / Scalar(3);
  out.std_error = std::hypot(out.mc_error, out.quadrature_error);
  if (out.infinite) out.value = std::numeric_limits<Scalar>::infinity();
  return out;
}

/// At one t: E|v_t|^2 from the Föllmer marginal against I(S_t mu | gamma_d)/t
/// from independent Slepian draws, the latter using the Slepian mixture density directly.
template <typename Scalar>
struct DeBruijnPoint {
  Scalar t;
  Estimate<Scalar> drift_energy;
  Estimate<Scalar> fisher_over_t;
  [[nodiscard]] Estimate<Scalar> gap() const { return difference(drift_energy, fisher_over_t); }
  [[nodiscard]] Scalar relative_gap() const {
    const Scalar denom = std::max(std::abs(fisher_over_t.value), std::numeric_limits<Scalar>::min());
    return std::abs(gap().value) / denom;
  }
  [[nodiscard]] bool within(Scalar k_sigma = Scalar(3)) const { return gap().consistent_with(Scalar(0), k_sigma); }
};

/// I(S_t mu | gamma_d) = E|grad log s_t(Y) + Y|^2, Y ~ S_t mu with Lebesgue density s_t.
template <typename Scalar>
Estimate<Scalar> slepian_fisher(const Mixture<Scalar>& mu, Scalar t, Index n, const RandomStream& stream) {
  const auto st = slepian(mu, t);
  const Index d = mu.dimension();
  const Scalar a = std::sqrt(t), sd = std::sqrt(Scalar(1) - t);
  VectorX<Scalar> vals(n);
  parallel_for(n, [&](Index b, Index e) {
    VectorX<Scalar> z(d);
    for (Index j = b; j < e; ++j) {
      CounterEngine engine = stream.engine(static_cast<std::uint64_t>(j));
      const VectorX<Scalar> xi = mu.draw(engine);
      fill_standard_normal(engine, z);
      const VectorX<Scalar> y = a * xi + sd * z;
      vals(j) = (st.score(y) + y).squaredNorm();
    }
  });
  return mean_estimate(vals);
}

template <typename Scalar>
std::vector<DeBruijnPoint<Scalar>> debruijn_check(const Mixture<Scalar>& mu, const VectorX<Scalar>& times,
                                                  Index n_paths, const RandomStream& stream) {
  std::vector<DeBruijnPoint<Scalar>> out;
  for (Index k = 0; k < times.size(); ++k) {
    const Scalar t = times(k);
    detail::require_open_unit(t, "debruijn_check");
    DeBruijnPoint<Scalar> p{t, detail::drift_energy(mu, t, n_paths, stream.fork(2 * static_cast<std::uint64_t>(k))),
                            slepian_fisher(mu, t, n_paths, stream.fork(2 * static_cast<std::uint64_t>(k) + 1))};
    p.fisher_over_t.value /= t;
    p.fisher_over_t.std_error /= t;
    out.push_back(p);
  }
  return out;
}

/// One test statistic of the martingale battery, as a z-score against 0.
template <typename Scalar>
struct MartingaleStatistic {
  std::string name;
  Estimate<Scalar> estimate;
  [[nodiscard]] Scalar z() const { return estimate.resolved_z(); }
};

template <typename Scalar>
struct MartingaleReport {
  Scalar s, t;
  std::vector<MartingaleStatistic<Scalar>> statistics;
  [[nodiscard]] Scalar max_z() const {
    Scalar m = 0;
    for (const auto& st : statistics) m = std::max(m, st.z());
    return m;
  }
};

/// Necessary consequences of E[v_t | X_s] = v_s: E[(v_t - v_s) g(X_s)] = 0 for
/// g in {1, x_j, x_j^2, exp(clip(x_j, -2, 2))}, each output coordinate.
template <typename Scalar>
std::vector<MartingaleReport<Scalar>> martingale_residuals(const Mixture<Scalar>& mu,
                                                           const std::vector<std::pair<Scalar, Scalar>>& pairs,
                                                           Index n_paths, const RandomStream& stream) {
  std::vector<MartingaleReport<Scalar>> out;
  const Index d = mu.dimension();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [s, t] = pairs[p];
    if (!(s < t)) throw std::invalid_argument("martingale_residuals: need s < t");
    detail::require_open_unit(t, "martingale_residuals");
    VectorX<Scalar> times(2);
    times << s, t;
    const auto ens = simulate_follmer(mu, times, n_paths, stream.fork(p));
    const auto v = drift_along_ensemble(mu, ens);
    const SampleMatrix<Scalar> xs = ens.values(0);
    const SampleMatrix<Scalar> dv = v[1] - v[0];
    MartingaleReport<Scalar> rep{s, t, {}};
    auto add = [&](const std::string& name, const VectorX<Scalar>& g) {
      for (Index k = 0; k < d; ++k) {
        const VectorX<Scalar> prod = g.cwiseProduct(dv.col(k));
        rep.statistics.push_back({name + "*dv" + std::to_string(k), mean_estimate(prod)});
      }
    };
    add("1", VectorX<Scalar>::Ones(n_paths));
    for (Index j = 0; j < d; ++j) {
      const VectorX<Scalar> xj = xs.col(j);
      add("x" + std::to_string(j), xj);
      add("x" + std::to_string(j) + "^2", xj.array().square().matrix());
      add("exp(x" + std::to_string(j) + ")", xj.array().max(Scalar(-2)).min(Scalar(2)).exp().matrix());
    }
    out.push_back(std::move(rep));
  }
  return out;
}

template <typename Scalar>
struct RepresentationLevel {
  Index intervals;
  Estimate<Scalar> mean_square_gap;
  Estimate<Scalar> change;  // paired, against the previous level; zero on the first
};

/// Checks X_1 = E[X_1] + int_0^1 Gamma_t dW^X_t on uniform grids with
/// 2^level intervals. W^X increments are reconstructed as dX - v dt with
/// left-endpoint drift; all levels reuse the same exact paths, simulated on
/// the finest grid.
template <typename Scalar>
std::vector<RepresentationLevel<Scalar>> martingale_representation_check(const Mixture<Scalar>& mu,
                                                                         const std::vector<int>& levels, Index n_paths,
                                                                         const RandomStream& stream) {
  if (levels.empty()) return {};
  const int finest = *std::max_element(levels.begin(), levels.end());
  if (finest < 1 || finest > 20) throw std::invalid_argument("representation check: levels must lie in [1,20]");
  const Index fine = Index(1) << finest;
  const Index d = mu.dimension();
  VectorX<Scalar> times(fine + 1);
  for (Index k = 0; k <= fine; ++k) times(k) = Scalar(k) / Scalar(fine);
  times(fine) = Scalar(1);
  std::vector<SmoothedMixture<Scalar>> marginals;
  marginals.reserve(static_cast<std::size_t>(fine));
  for (Index k = 1; k < fine; ++k) marginals.push_back(follmer_marginal(mu, times(k)));
  const VectorX<Scalar> mean = mu.mean();
  const MatrixX<Scalar> cov = mu.covariance();
  const RandomStream terminal_stream = stream.fork(0), bridge_stream = stream.fork(1);
  MatrixX<Scalar> gaps(n_paths, static_cast<Index>(levels.size()));
  parallel_for(n_paths, [&](Index b, Index e) {
    MatrixX<Scalar> x(fine + 1, d), drift(fine, d);
    std::vector<MatrixX<Scalar>> gamma(static_cast<std::size_t>(fine));
    VectorX<Scalar> beta(d), z(d);
    for (Index j = b; j < e; ++j) {
      CounterEngine te = terminal_stream.engine(static_cast<std::uint64_t>(j));
      const VectorX<Scalar> xi = mu.draw(te);
      beta.setZero();
      x.row(0).setZero();
      for (Index k = 1; k <= fine; ++k) {
        CounterEngine be = bridge_stream.engine(static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k));
        fill_standard_normal(be, z);
        detail::bridge_step(times(k - 1), times(k), beta, z);
        x.row(k) = (times(k) * xi + beta).transpose();
      }
      drift.row(0) = mean.transpose();
      gamma[0] = cov;
      for (Index k = 1; k < fine; ++k) {
        const Scalar t = times(k);
        const auto& pt = marginals[static_cast<std::size_t>(k - 1)];
        const VectorX<Scalar> xk = x.row(k).transpose();
        const auto post = pt.posterior(xk, true);
        drift.row(k) = ((post.mean - xk) / (Scalar(1) - t)).transpose();
        gamma[static_cast<std::size_t>(k)] = post.covariance / (Scalar(1) - t);
      }
      const VectorX<Scalar> target = xi - mean;
      for (std::size_t l = 0; l < levels.size(); ++l) {
        const Index stride = Index(1) << (finest - levels[l]);
        VectorX<Scalar> integral = VectorX<Scalar>::Zero(d);
        for (Index k = 0; k < fine; k += stride) {
          const Scalar h = times(k + stride) - times(k);
          const VectorX<Scalar> dw = (x.row(k + stride) - x.row(k) - h * drift.row(k)).transpose();
          integral += gamma[static_cast<std::size_t>(k)] * dw;
        }
        gaps(j, static_cast<Index>(l)) = (target - integral).squaredNorm();
      }
    }
  });
  std::vector<RepresentationLevel<Scalar>> out;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto c = static_cast<Index>(l);
    const Estimate<Scalar> change =
        l == 0 ? Estimate<Scalar>{Scalar(0), Scalar(0), n_paths} : mean_estimate(gaps.col(c) - gaps.col(c - 1));
    out.push_back({Index(1) << levels[l], mean_estimate(gaps.col(c)), change});
  }
  return out;
}

}  // namespace follmer
