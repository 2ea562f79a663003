#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "follmer/parallel.hpp"
#include "follmer/rng.hpp"
#include "follmer/stats.hpp"
#include "follmer/types.hpp"

namespace follmer {

// ---------------------------------------------------------------------------
// Divergences

/// KL(N(mean_a, cov_a) || N(mean_b, cov_b)). Both covariances must be positive definite.
template <typename Scalar>
Scalar kl_gaussian(const VectorX<Scalar>& mean_a, const MatrixX<Scalar>& cov_a, const VectorX<Scalar>& mean_b,
                   const MatrixX<Scalar>& cov_b) {
  const Index d = mean_a.size();
  if (mean_b.size() != d || cov_a.rows() != d || cov_b.rows() != d)
    throw std::invalid_argument("kl_gaussian: dimension mismatch");
  const Eigen::LLT<MatrixX<Scalar>> la(cov_a), lb(cov_b);
  if (la.info() != Eigen::Success || lb.info() != Eigen::Success)
    throw std::domain_error("kl_gaussian: covariance is not positive definite");
  const VectorX<Scalar> diag_a = la.matrixLLT().diagonal();
  const VectorX<Scalar> diag_b = lb.matrixLLT().diagonal();
  if (diag_a.minCoeff() <= Scalar(0) || diag_b.minCoeff() <= Scalar(0))
    throw std::domain_error("kl_gaussian: covariance is singular");
  const Scalar logdet_a = Scalar(2) * diag_a.array().log().sum();
  const Scalar logdet_b = Scalar(2) * diag_b.array().log().sum();
  const Scalar trace = lb.solve(cov_a).trace();
  const VectorX<Scalar> dm = mean_b - mean_a;
  const Scalar quad = dm.dot(lb.solve(dm));
  return std::max(Scalar(0), Scalar(0.5) * (trace + quad - Scalar(d) + logdet_b - logdet_a));
}

template <typename Scalar>
struct KnnDivergence {
  Scalar value{0};
  Scalar std_error{0};
  bool reliable{true};
  Index excluded{0};  // terms dropped for zero distances
};

/// Distance from each query row to its k-th nearest reference row. With
/// `exclude_self`, queries and references are the same set and index i never
/// neighbours itself. Candidates come from the Gram-matrix expansion and are
/// re-ranked with exact distances.
template <typename Scalar>
VectorX<Scalar> kth_neighbor_distance(const SampleMatrix<Scalar>& queries, const SampleMatrix<Scalar>& refs, Index k,
                                      bool exclude_self) {
  const Index n = queries.rows(), m = refs.rows();
  const Index usable = m - (exclude_self ? 1 : 0);
  if (k < 1 || k > usable) throw std::invalid_argument("kth_neighbor_distance: k out of range");
  const VectorX<Scalar> ref_norms = refs.rowwise().squaredNorm();
  VectorX<Scalar> out(n);
  constexpr Index block = 128;
  const Index blocks = (n + block - 1) / block;
  const Index candidates = std::min(usable, k + 8);
  parallel_for(blocks, [&](Index bb, Index be) {
    std::vector<std::pair<Scalar, Index>> row(static_cast<std::size_t>(m));
    std::vector<Scalar> exact;
    for (Index blk = bb; blk < be; ++blk) {
      const Index r0 = blk * block, rows = std::min(block, n - r0);
      const MatrixX<Scalar> gram = queries.middleRows(r0, rows) * refs.transpose();
      for (Index r = 0; r < rows; ++r) {
        const Index qi = r0 + r;
        const Scalar qn = queries.row(qi).squaredNorm();
        std::size_t used = 0;
        for (Index c = 0; c < m; ++c) {
          if (exclude_self && c == qi) continue;
          row[used++] = {qn + ref_norms(c) - Scalar(2) * gram(r, c), c};
        }
        const auto mid = row.begin() + static_cast<std::ptrdiff_t>(candidates);
        std::nth_element(row.begin(), mid - 1, row.begin() + static_cast<std::ptrdiff_t>(used));
        exact.clear();
        for (auto it = row.begin(); it != mid; ++it) exact.push_back((queries.row(qi) - refs.row(it->second)).squaredNorm());
        // every candidate below the selection pivot is closer than anything excluded
        std::nth_element(exact.begin(), exact.begin() + (k - 1), exact.end());
        out(qi) = std::sqrt(exact[static_cast<std::size_t>(k - 1)]);
      }
    }
  });
  return out;
}

/// k-nearest-neighbour estimate of KL(P || Q) from samples:
///   (d/n) sum_i log(nu_k(i) / rho_k(i)) + log(m / (n - 1)),
/// rho_k within P, nu_k from P to Q. Standard error by bootstrap over the
/// per-point terms. Zero distances (duplicates) are dropped; more than 1% of
/// them marks the estimate unreliable. Larger k lowers the variance but the
/// estimate then runs low by more than its standard error on Gaussian pairs
/// with KL above ~0.1 at a few thousand samples, so k = 1 is the default.
template <typename Scalar>
KnnDivergence<Scalar> kl_knn(const SampleMatrix<Scalar>& p, const SampleMatrix<Scalar>& q, Index k = 1,
                             Index n_bootstrap = 200, const RandomStream& stream = RandomStream(0x6b6e6e)) {
  if (p.cols() != q.cols()) throw std::invalid_argument("kl_knn: dimension mismatch");
  if (p.rows() < 1000 || q.rows() < 1000) throw std::invalid_argument("kl_knn: need at least 1000 samples per set");
  const Index n = p.rows(), m = q.rows(), d = p.cols();
  const VectorX<Scalar> rho = kth_neighbor_distance(p, p, k, true);
  const VectorX<Scalar> nu = kth_neighbor_distance(p, q, k, false);
  std::vector<Scalar> terms;
  terms.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    if (rho(i) > Scalar(0) && nu(i) > Scalar(0)) terms.push_back(Scalar(d) * std::log(nu(i) / rho(i)));
  KnnDivergence<Scalar> out;
  out.excluded = n - static_cast<Index>(terms.size());
  out.reliable = out.excluded * 100 <= n;
  if (terms.empty()) {
    out.value = std::numeric_limits<Scalar>::quiet_NaN();
    out.std_error = std::numeric_limits<Scalar>::quiet_NaN();
    out.reliable = false;
    return out;
  }
  const auto count = static_cast<Index>(terms.size());
  const Scalar correction = std::log(Scalar(m) / Scalar(n - 1));
  out.value = std::accumulate(terms.begin(), terms.end(), Scalar(0)) / Scalar(count) + correction;
  VectorX<Scalar> boot(n_bootstrap);
  parallel_for(n_bootstrap, [&](Index b, Index e) {
    for (Index r = b; r < e; ++r) {
      CounterEngine engine = stream.engine(static_cast<std::uint64_t>(r));
      std::uniform_int_distribution<Index> pick(0, count - 1);
      Scalar acc = 0;
      for (Index i = 0; i < count; ++i) acc += terms[static_cast<std::size_t>(pick(engine))];
      boot(r) = acc / Scalar(count);
    }
  });
  if (n_bootstrap > 1) {
    const Scalar mean = boot.mean();
    out.std_error = std::sqrt((boot.array() - mean).square().sum() / Scalar(n_bootstrap - 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error-bound calculators

enum class BoundKind { EulerMaruyama, FisherInformation, Ada, AdaIntrinsic, AdaLowDimension, AdaDimensionFree };

inline const char* to_string(BoundKind t) {
  switch (t) {
    case BoundKind::EulerMaruyama: return "em";
    case BoundKind::FisherInformation: return "fisher";
    case BoundKind::Ada: return "ada";
    case BoundKind::AdaIntrinsic: return "ada_intrinsic";
    case BoundKind::AdaLowDimension: return "ada_low_dimension";
    case BoundKind::AdaDimensionFree: return "ada_dimension_free";
  }
  return "em";
}

template <typename Scalar>
struct BoundInputs {
  Scalar kappa{0};
  Scalar dimension{1};
  Scalar t0{0};
  Scalar delta{0};
  Scalar eps_score{0};
  Scalar second_moment{0};  // E|X_1|^2
  Scalar entropy{0};        // H(mu | gamma_d)
  Scalar fisher{0};         // I(mu | gamma_d)
  Scalar max_step{0};       // h-bar
  Scalar steps{0};          // N
  Scalar intrinsic_dim{1};  // k
  Scalar eps0{0};
  Scalar moment_radius{3};  // R
  bool sampling_r{false};   // use the h_i <= 6 kappa t_i variant
  Scalar constant{1};       // stand-in for unspecified universal constants
};

template <typename Scalar>
struct BoundReport {
  BoundKind kind;
  BoundInputs<Scalar> inputs;
  Scalar value{0};
  bool certified{true};
  bool hypotheses_hold{true};
  std::vector<std::string> warnings;
};

namespace detail {
template <typename Scalar>
void note(BoundReport<Scalar>& r, bool ok, const std::string& what) {
  if (!ok) {
    r.hypotheses_hold = false;
    r.warnings.push_back(what);
  }
}
template <typename Scalar>
Scalar log_span(const BoundInputs<Scalar>& in) {
  if (in.delta <= Scalar(0)) return std::numeric_limits<Scalar>::infinity();
  return std::log((Scalar(1) - in.t0) / in.delta);
}
template <typename Scalar>
void check_intrinsic_ranges(const BoundInputs<Scalar>& in) {
  if (!(in.moment_radius >= Scalar(3))) throw std::invalid_argument("intrinsic bound: need R >= 3");
  if (!(in.eps0 > Scalar(0) && in.eps0 <= std::exp(Scalar(-1))))
    throw std::invalid_argument("intrinsic bound: need 0 < eps0 <= 1/e");
  if (!(in.intrinsic_dim >= Scalar(1))) throw std::invalid_argument("intrinsic bound: need k >= 1");
  if (!(in.delta > Scalar(0))) throw std::invalid_argument("intrinsic bound: need delta > 0");
}
}  // namespace detail

/// eps^2 + kappa d log((1 - t0)/delta) + 2 kappa E|X_1|^2 + (t0/2)(d + E|X_1|^2)
template <typename Scalar>
BoundReport<Scalar> bound_em(const BoundInputs<Scalar>& in) {
  BoundReport<Scalar> r{BoundKind::EulerMaruyama, in, Scalar(0), true, true, {}};
  detail::note(r, in.t0 <= Scalar(0.5), "t0 > 1/2");
  detail::note(r, in.delta > Scalar(0), "delta = 0: bound is infinite");
  r.value = in.eps_score * in.eps_score + in.kappa * in.dimension * detail::log_span(in) +
            Scalar(2) * in.kappa * in.second_moment + Scalar(0.5) * in.t0 * (in.dimension + in.second_moment);
  return r;
}

/// t0 H(mu|gamma) + eps^2 + I(mu|gamma) h-bar, for grids ending at t_N = 1.
template <typename Scalar>
BoundReport<Scalar> bound_fi(const BoundInputs<Scalar>& in) {
  BoundReport<Scalar> r{BoundKind::FisherInformation, in, Scalar(0), true, true, {}};
  detail::note(r, in.t0 <= Scalar(0.5), "t0 > 1/2");
  detail::note(r, std::isfinite(in.entropy) && std::isfinite(in.fisher), "infinite entropy or Fisher information");
  if (!std::isfinite(in.entropy) || !std::isfinite(in.fisher)) {
    r.value = std::numeric_limits<Scalar>::infinity();
    return r;
  }
  r.value = in.t0 * in.entropy + in.eps_score * in.eps_score + in.fisher * in.max_step;
  return r;
}

/// t0 E|X_1|^2 + kappa d log((1 - t0)/delta) + 3 kappa E|X_1|^2 + eps^2
template <typename Scalar>
BoundReport<Scalar> bound_ada(const BoundInputs<Scalar>& in) {
  BoundReport<Scalar> r{BoundKind::Ada, in, Scalar(0), true, true, {}};
  detail::note(r, in.t0 <= Scalar(0.5), "t0 > 1/2");
  detail::note(r, in.delta > Scalar(0), "delta = 0: bound is infinite");
  r.value = in.t0 * in.second_moment + in.kappa * in.dimension * detail::log_span(in) +
            Scalar(3) * in.kappa * in.second_moment + in.eps_score * in.eps_score;
  return r;
}

/// L = k log(1/eps0) + log(R/delta)
template <typename Scalar>
Scalar intrinsic_log_factor(const BoundInputs<Scalar>& in) {
  return in.intrinsic_dim * std::log(Scalar(1) / in.eps0) + std::log(in.moment_radius / in.delta);
}

/// t0 E|X_1|^2 + 4 kappa E|X_1|^2 + C kappa L log((1 - t0)/delta) + eps^2, with the
/// second term replaced by C kappa L log(1/t0) in the sampling_r variant.
/// The universal constant C is not known; the report is uncertified.
template <typename Scalar>
BoundReport<Scalar> bound_ada_m(const BoundInputs<Scalar>& in) {
  detail::check_intrinsic_ranges(in);
  BoundReport<Scalar> r{BoundKind::AdaIntrinsic, in, Scalar(0), true, true, {}};
  r.certified = false;
  detail::note(r, in.t0 <= Scalar(0.5), "t0 > 1/2");
  const Scalar L = intrinsic_log_factor(in);
  const Scalar second = in.sampling_r ? in.constant * in.kappa * L * std::log(Scalar(1) / in.t0)
                                      : Scalar(4) * in.kappa * in.second_moment;
  r.value = in.t0 * in.second_moment + second + in.constant * in.kappa * L * detail::log_span(in) +
            in.eps_score * in.eps_score;
  return r;
}

/// t0 E|X_1|^2 + C kappa min{E|X_1|^2, (k log k) log(1/t0)} + C kappa^2 N k log k + eps^2 (uncertified).
template <typename Scalar>
BoundReport<Scalar> bound_ada_low_dimension(const BoundInputs<Scalar>& in) {
  BoundReport<Scalar> r{BoundKind::AdaLowDimension, in, Scalar(0), true, true, {}};
  r.certified = false;
  detail::note(r, in.t0 <= Scalar(0.5), "t0 > 1/2");
  const Scalar klogk = in.intrinsic_dim * std::log(in.intrinsic_dim);
  r.value = in.t0 * in.second_moment +
            in.constant * in.kappa * std::min(in.second_moment, klogk * std::log(Scalar(1) / in.t0)) +
            in.constant * in.kappa * in.kappa * in.steps * klogk + in.eps_score * in.eps_score;
  return r;
}

/// t0 E|X_1|^2 + 4 kappa E|X_1|^2 + C kappa k log(1/delta) log((1 - t0)/delta) + eps^2 (uncertified).
template <typename Scalar>
BoundReport<Scalar> bound_ada_dimension_free(const BoundInputs<Scalar>& in) {
  BoundReport<Scalar> r{BoundKind::AdaDimensionFree, in, Scalar(0), true, true, {}};
  r.certified = false;
  detail::note(r, in.t0 <= Scalar(0.5), "t0 > 1/2");
  detail::note(r, in.delta > Scalar(0), "delta = 0: bound is infinite");
  const Scalar ck = in.constant * in.kappa * in.intrinsic_dim * std::log(Scalar(1) / in.delta);
  const Scalar second = in.sampling_r ? ck * std::log(Scalar(1) / in.t0) : Scalar(4) * in.kappa * in.second_moment;
  r.value = in.t0 * in.second_moment + second + ck * detail::log_span(in) + in.eps_score * in.eps_score;
  return r;
}

// ---------------------------------------------------------------------------
// Geometry of the support

/// Farthest-point eps-net of the rows of `points`: starts at row 0 and keeps
/// adding the row farthest from the net (lowest index on ties) while that
/// distance is at least eps. The result covers every row with open eps-balls
/// and is eps-separated, hence maximal.
template <typename Scalar>
std::vector<Index> epsilon_net(const MatrixX<Scalar>& points, Scalar eps) {
  if (!(eps > Scalar(0))) throw std::invalid_argument("epsilon_net: eps must be positive");
  const Index n = points.rows();
  std::vector<Index> net;
  if (n == 0) return net;
  VectorX<Scalar> dist = VectorX<Scalar>::Constant(n, std::numeric_limits<Scalar>::infinity());
  Index next = 0;
  while (true) {
    net.push_back(next);
    for (Index i = 0; i < n; ++i) dist(i) = std::min(dist(i), (points.row(i) - points.row(next)).norm());
    Index far = 0;
    dist.maxCoeff(&far);
    if (dist(far) < eps) break;
    next = far;
  }
  return net;
}

template <typename Scalar>
Index covering_number(const MatrixX<Scalar>& points, Scalar eps) {
  return static_cast<Index>(epsilon_net(points, eps).size());
}

/// E sup_{x,y in X, |x-y| <= eps} |(x - y) . Z| over the rows X of `points`, Z ~ N(0, I_d).
/// Draw m uses substream (m, 0).
template <typename Scalar>
Estimate<Scalar> gaussian_width(const MatrixX<Scalar>& points, Scalar eps, Index n_mc, const RandomStream& stream) {
  if (!(eps > Scalar(0))) throw std::invalid_argument("gaussian_width: eps must be positive");
  const Index n = points.rows(), d = points.cols();
  std::vector<VectorX<Scalar>> diffs;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      VectorX<Scalar> dv = points.row(i) - points.row(j);
      if (dv.norm() <= eps) diffs.push_back(std::move(dv));
    }
  MatrixX<Scalar> dm(static_cast<Index>(diffs.size()), d);
  for (std::size_t r = 0; r < diffs.size(); ++r) dm.row(static_cast<Index>(r)) = diffs[r].transpose();
  VectorX<Scalar> sup = VectorX<Scalar>::Zero(n_mc);
  if (!diffs.empty()) {
    parallel_for(n_mc, [&](Index b, Index e) {
      for (Index m = b; m < e; ++m) {
        const VectorX<Scalar> z = standard_normal<Scalar>(stream, static_cast<std::uint64_t>(m), 0, d);
        sup(m) = (dm * z).cwiseAbs().maxCoeff();
      }
    });
  }
  return mean_estimate(sup);
}

/// Feasibility of the low-dimensionality conditions for candidate (k, eps0, delta).
template <typename Scalar>
struct IntrinsicCheck {
  Index covering{0};
  Estimate<Scalar> width;
  bool covering_ok{false};  // N(X, eps0) <= eps0^{-k}
  bool scale_ok{false};     // eps0 <= sqrt(delta) log(1/eps0)
  bool width_ok{false};     // width <= sqrt(delta) k log(1/eps0)
  [[nodiscard]] bool holds() const { return covering_ok && scale_ok && width_ok; }
};

template <typename Scalar>
IntrinsicCheck<Scalar> check_intrinsic(const MatrixX<Scalar>& support, Scalar k, Scalar eps0, Scalar delta, Index n_mc,
                                       const RandomStream& stream) {
  IntrinsicCheck<Scalar> c;
  c.covering = covering_number(support, eps0);
  c.width = gaussian_width(support, eps0, n_mc, stream);
  const Scalar log_inv = std::log(Scalar(1) / eps0);
  c.covering_ok = Scalar(c.covering) <= std::pow(eps0, -k);
  c.scale_ok = eps0 <= std::sqrt(delta) * log_inv;
  c.width_ok = c.width.value <= std::sqrt(delta) * k * log_inv;
  return c;
}

}  // namespace follmer
