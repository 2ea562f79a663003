#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "follmer/follmer.hpp"
#include "oracles.hpp"

using namespace follmer;
using V = VectorX<double>;
using M = MatrixX<double>;
using S = SampleMatrix<double>;

namespace {

/// Rows drawn from N(mean, cov) with std::normal_distribution; the library
/// samplers are not involved.
S gaussian_rows(const V& mean, const M& cov, Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> z;
  const M L = cov.llt().matrixL();
  S out(n, mean.size());
  for (Index i = 0; i < n; ++i) {
    V e(mean.size());
    for (Index k = 0; k < e.size(); ++k) e(k) = z(gen);
    out.row(i) = (mean + L * e).transpose();
  }
  return out;
}

M random_spd(Index d, std::mt19937_64& gen, double spread = 1) {
  std::uniform_real_distribution<double> u(-0.4 * spread, 0.4 * spread), s(1 - 0.4 * spread, 1 + 0.6 * spread);
  M a = M::Identity(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = (i == j ? s(gen) : u(gen));
  return a * a.transpose();
}

/// Points i/(n-1) along a random unit direction in R^d.
M segment(Index n, Index d, std::mt19937_64& gen) {
  std::normal_distribution<double> z;
  V dir(d);
  for (Index k = 0; k < d; ++k) dir(k) = z(gen);
  dir.normalize();
  M out(n, d);
  for (Index i = 0; i < n; ++i) out.row(i) = (double(i) / double(n - 1)) * dir.transpose();
  return out;
}

double dist(const M& p, Index i, Index j) { return (p.row(i) - p.row(j)).norm(); }

bool separated(const M& p, const std::vector<Index>& net, double eps) {
  for (std::size_t a = 0; a < net.size(); ++a)
    for (std::size_t b = a + 1; b < net.size(); ++b)
      if (dist(p, net[a], net[b]) < eps) return false;
  return true;
}

bool covers(const M& p, const std::vector<Index>& net, double eps) {
  for (Index i = 0; i < p.rows(); ++i) {
    bool hit = false;
    for (Index c : net) hit = hit || dist(p, i, c) < eps;
    if (!hit) return false;
  }
  return true;
}

/// Farthest-point traversal written out directly: O(n^2) per insertion.
std::vector<Index> farthest_point_oracle(const M& p, double eps) {
  std::vector<Index> net{0};
  while (true) {
    Index best = -1;
    double best_d = -1;
    for (Index i = 0; i < p.rows(); ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (Index c : net) d = std::min(d, dist(p, i, c));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best_d < eps) return net;
    net.push_back(best);
  }
}

}  // namespace

TEST_CASE("Gaussian KL") {
  SUBCASE("closed-form values") {
    const M I1 = M::Identity(1, 1);
    CHECK(kl_gaussian<double>(V::Zero(1), I1, V::Zero(1), I1) == 0);
    CHECK(kl_gaussian<double>(V::Ones(1), I1, V::Zero(1), I1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("scaled identity against quadrature") {
    // N(0, 2 I_2) vs N(0, I_2) factorises into two copies of the 1-D divergence
    const double one_d = oracle::simpson(
        [](double x) {
          const double p = oracle::normal_pdf(x, 0, 2);
          return p * (std::log(p) - std::log(oracle::normal_pdf(x, 0, 1)));
        },
        -25, 25, 400000);
    const double kl = kl_gaussian<double>(V::Zero(2), 2 * M::Identity(2, 2), V::Zero(2), M::Identity(2, 2));
    CHECK(kl == doctest::Approx(2 * one_d).epsilon(1e-9));
    CHECK(kl == doctest::Approx(1 - std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("nonnegative and zero only on equal laws") {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> z;
    for (int r = 0; r < 200; ++r) {
      const Index d = 1 + r % 5;
      V ma(d), mb(d);
      for (Index k = 0; k < d; ++k) ma(k) = z(gen), mb(k) = z(gen);
      const M ca = random_spd(d, gen), cb = random_spd(d, gen);
      CHECK(kl_gaussian(ma, ca, mb, cb) > 0);
      CHECK(std::abs(kl_gaussian(ma, ca, ma, ca)) < 1e-12);
    }
  }
  SUBCASE("singular covariance and mismatched dimensions") {
    M sing(2, 2);
    sing << 1, 1, 1, 1;
    const M I2 = M::Identity(2, 2);
    CHECK_THROWS_AS(kl_gaussian<double>(V::Zero(2), sing, V::Zero(2), I2), std::domain_error);
    CHECK_THROWS_AS(kl_gaussian<double>(V::Zero(2), I2, V::Zero(2), sing), std::domain_error);
    CHECK_THROWS_AS(kl_gaussian<double>(V::Zero(3), I2, V::Zero(2), I2), std::invalid_argument);
  }
}

TEST_CASE("kNN divergence") {
  std::mt19937_64 gen(42);
  SUBCASE("equal laws") {
    const S p = gaussian_rows(V::Zero(2), M::Identity(2, 2), 4000, gen);
    const S q = gaussian_rows(V::Zero(2), M::Identity(2, 2), 4000, gen);
    const auto e = kl_knn(p, q);
    CHECK(e.reliable);
    CHECK(std::abs(e.value) < 3 * e.std_error);
  }
  SUBCASE("unit shift in one dimension") {
    const S p = gaussian_rows(V::Ones(1), M::Identity(1, 1), 10000, gen);
    const S q = gaussian_rows(V::Zero(1), M::Identity(1, 1), 10000, gen);
    const auto e = kl_knn(p, q);
    CHECK(e.std_error > 0);
    CHECK(std::abs(e.value - 0.5) < 4 * e.std_error);
  }
  SUBCASE("twenty random Gaussian pairs against the closed form") {
    // close pairs, as between a sampler's law and its target; further apart
    // the estimator's bias outgrows its standard error
    std::normal_distribution<double> z;
    int within = 0;
    for (int r = 0; r < 20; ++r) {
      const Index d = 1 + r % 3;
      V ma(d), mb(d);
      for (Index k = 0; k < d; ++k) ma(k) = 0.25 * z(gen), mb(k) = 0.25 * z(gen);
      const M ca = random_spd(d, gen, 0.3), cb = random_spd(d, gen, 0.3);
      const S p = gaussian_rows(ma, ca, 4000, gen), q = gaussian_rows(mb, cb, 4000, gen);
      const auto e = kl_knn(p, q, 1, 200,
                            RandomStream(std::uint64_t(r)));
      const double exact = kl_gaussian(ma, ca, mb, cb);
      if (std::abs(e.value - exact) <= 3 * e.std_error) ++within;
    }
    CHECK(within >= 18);
  }
  SUBCASE("duplicate-heavy samples are flagged") {
    S p = S::Zero(2000, 2);
    const S q = gaussian_rows(V::Zero(2), M::Identity(2, 2), 2000, gen);
    CHECK(!kl_knn(p, q).reliable);
    p.topRows(1000) = gaussian_rows(V::Zero(2), M::Identity(2, 2), 1000, gen);
    CHECK(!kl_knn(p, q).reliable);
  }
  SUBCASE("bootstrap is reproducible") {
    const S p = gaussian_rows(V::Zero(2), M::Identity(2, 2), 1500, gen);
    const S q = gaussian_rows(V::Ones(2), M::Identity(2, 2), 1500, gen);
    const auto a = kl_knn(p, q), b = kl_knn(p, q);
    CHECK(a.value == b.value);
    CHECK(a.std_error == b.std_error);
  }
  SUBCASE("kth neighbour distance against brute force") {
    const S p = gaussian_rows(V::Zero(3), M::Identity(3, 3), 300, gen);
    const S q = gaussian_rows(V::Ones(3), M::Identity(3, 3), 200, gen);
    for (Index k : {1, 5}) {
      const V self = kth_neighbor_distance(p, p, k, true);
      const V cross = kth_neighbor_distance(p, q, k, false);
      for (Index i = 0; i < p.rows(); ++i) {
        std::vector<double> a, b;
        for (Index j = 0; j < p.rows(); ++j)
          if (j != i) a.push_back((p.row(i) - p.row(j)).norm());
        for (Index j = 0; j < q.rows(); ++j) b.push_back((p.row(i) - q.row(j)).norm());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(self(i) == doctest::Approx(a[std::size_t(k - 1)]).epsilon(1e-12));
        CHECK(cross(i) == doctest::Approx(b[std::size_t(k - 1)]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("size and shape checks") {
    const S small = gaussian_rows(V::Zero(2), M::Identity(2, 2), 999, gen);
    const S big = gaussian_rows(V::Zero(2), M::Identity(2, 2), 1000, gen);
    CHECK_THROWS_AS(kl_knn(small, big), std::invalid_argument);
    CHECK_THROWS_AS(kl_knn(big, S(S::Zero(1000, 3))), std::invalid_argument);
  }
}

TEST_CASE("bound arithmetic") {
  BoundInputs<double> in;
  in.dimension = 1;
  in.kappa = 2;
  in.t0 = 0.1;
  in.delta = 0.1;
  in.second_moment = 1;
  SUBCASE("Euler-Maruyama") {
    const auto r = bound_em(in);
    CHECK(r.value == doctest::Approx(2 * std::log(9.0) + 4.1).epsilon(1e-15));
    CHECK(r.certified);
    CHECK(r.hypotheses_hold);
    CHECK(r.kind == BoundKind::EulerMaruyama);
  }
  SUBCASE("ada") {
    CHECK(bound_ada(in).value == doctest::Approx(0.1 + 2 * std::log(9.0) + 6).epsilon(1e-15));
    BoundInputs<double> eps_only;
    eps_only.eps_score = 0.3;
    eps_only.delta = 0.5;
    CHECK(bound_ada(eps_only).value == doctest::Approx(0.09).epsilon(1e-15));
  }
  SUBCASE("vanishing limit") {
    BoundInputs<double> z;
    z.dimension = 3;
    z.delta = 0.1;
    CHECK(bound_em(z).value == 0);
    z.t0 = 1e-12;
    CHECK(bound_em(z).value < 1e-11);
  }
  SUBCASE("hypothesis warnings") {
    in.t0 = 0.6;
    const auto r = bound_em(in);
    CHECK(!r.hypotheses_hold);
    CHECK(r.warnings.size() == 1);
    CHECK(std::isfinite(r.value));
    in.t0 = 0.1;
    in.delta = 0;
    CHECK(std::isinf(bound_em(in).value));
    CHECK(!bound_ada(in).hypotheses_hold);
  }
  SUBCASE("Fisher-information form") {
    BoundInputs<double> f;
    f.t0 = 0.1;
    f.max_step = 0.1;
    // N(1,1): H = 1/2 and I = E|x - (x - 1)|^2 = 1
    const auto mu = Mixture<double>::gaussian(V::Ones(1), M::Identity(1, 1));
    f.entropy = 0.5;
    f.fisher = fisher_vs_gaussian(mu).value;
    CHECK(f.fisher == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(bound_fi(f).value == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(bound_fi(f).certified);
    BoundInputs<double> g = f;
    g.entropy = g.fisher = 0;
    g.eps_score = 0.2;
    CHECK(bound_fi(g).value == doctest::Approx(0.04).epsilon(1e-15));
    g.entropy = std::numeric_limits<double>::infinity();
    const auto r = bound_fi(g);
    CHECK(std::isinf(r.value));
    CHECK(!r.hypotheses_hold);
  }
  SUBCASE("ada beats EM when the init term dominates") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0, 1);
    int compared = 0;
    for (int r = 0; r < 2000; ++r) {
      BoundInputs<double> b;
      b.dimension = 1 + std::floor(100 * u(gen));
      b.t0 = 0.5 * u(gen);
      b.kappa = 0.2 * u(gen);
      b.delta = 0.01 + 0.5 * u(gen);
      b.second_moment = 5 * u(gen);
      b.eps_score = u(gen);
      if (b.t0 * b.dimension / 2 > b.t0 * b.second_moment / 2 + b.kappa * b.second_moment) {
        ++compared;
        CHECK(bound_ada(b).value < bound_em(b).value);
      }
    }
    CHECK(compared > 100);
  }
  SUBCASE("monotone in eps, kappa and t0") {
    auto sweep = [](auto field, auto bound) {
      BoundInputs<double> b;
      b.dimension = 4;
      b.delta = 0.05;
      b.second_moment = 2;
      b.entropy = 0.7;
      b.fisher = 1.3;
      b.max_step = 0.1;
      b.eps0 = 0.2;
      b.intrinsic_dim = 2;
      b.kappa = 0.3;
      b.t0 = 0.01;
      b.eps_score = 0.1;
      double prev = -1;
      for (int i = 0; i <= 40; ++i) {
        b.*field = 0.01 + 0.012 * i;
        const double v = bound(b).value;
        if (v < prev) return false;
        prev = v;
      }
      return true;
    };
    for (auto field : {&BoundInputs<double>::eps_score, &BoundInputs<double>::kappa}) {
      CHECK(sweep(field, bound_em<double>));
      CHECK(sweep(field, bound_ada<double>));
      CHECK(sweep(field, bound_fi<double>));
      CHECK(sweep(field, bound_ada_m<double>));
    }
    CHECK(sweep(&BoundInputs<double>::t0, bound_fi<double>));
    CHECK(sweep(&BoundInputs<double>::t0, bound_em<double>));
  }
  SUBCASE("dependence on t0 follows the derivative of the right-hand side") {
    // log((1 - t0)/delta) falls as t0 grows, so the ada form is not monotone in t0
    // once kappa d exceeds (1 - t0) E|X_1|^2
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(0, 1);
    int falling = 0;
    for (int r = 0; r < 2000; ++r) {
      BoundInputs<double> b;
      b.dimension = 1 + std::floor(20 * u(gen));
      b.kappa = u(gen);
      b.delta = 0.01 + 0.4 * u(gen);
      b.second_moment = 5 * u(gen);
      b.t0 = 0.45 * u(gen);
      const double h = 1e-6;
      auto b2 = b;
      b2.t0 += h;
      const double slope_em = 0.5 * (b.dimension + b.second_moment) - b.kappa * b.dimension / (1 - b.t0);
      const double slope_ada = b.second_moment - b.kappa * b.dimension / (1 - b.t0);
      if (std::abs(slope_em) > 1e-3) CHECK((bound_em(b2).value > bound_em(b).value) == (slope_em > 0));
      if (std::abs(slope_ada) > 1e-3) CHECK((bound_ada(b2).value > bound_ada(b).value) == (slope_ada > 0));
      falling += slope_ada < 0;
    }
    CHECK(falling > 100);
  }
  SUBCASE("no horizon-linear term") {
    // at fixed kappa, delta and eps the EM bound depends on T = -log(t0)/2 only through t0
    BoundInputs<double> b;
    b.dimension = 10;
    b.kappa = 0.1;
    b.delta = 0.01;
    b.second_moment = 10;
    double prev = 0;
    for (double T = 1; T <= 64; T *= 2) {
      b.t0 = std::exp(-2 * T);
      const double v = bound_em(b).value;
      if (T > 1) CHECK(v <= prev);
      prev = v;
    }
    CHECK(prev == doctest::Approx(0.1 * 10 * std::log(100.0) + 2 * 0.1 * 10).epsilon(1e-12));
  }
}

TEST_CASE("intrinsic-dimension bound") {
  BoundInputs<double> in;
  in.intrinsic_dim = 1;
  in.eps0 = std::exp(-1.0);
  in.moment_radius = 3;
  in.delta = 0.1;
  in.kappa = 0.2;
  in.t0 = 0.01;
  in.second_moment = 4;
  in.eps_score = 0.1;
  SUBCASE("log factor") { CHECK(intrinsic_log_factor(in) == doctest::Approx(1 + std::log(30.0)).epsilon(1e-15)); }
  SUBCASE("shape with C = 1") {
    const double L = 1 + std::log(30.0);
    const auto r = bound_ada_m(in);
    CHECK(!r.certified);
    CHECK(r.value == doctest::Approx(0.04 + 4 * 0.2 * 4 + 0.2 * L * std::log(0.99 / 0.1) + 0.01).epsilon(1e-14));
    in.sampling_r = true;
    CHECK(bound_ada_m(in).value ==
          doctest::Approx(0.04 + 0.2 * L * std::log(100.0) + 0.2 * L * std::log(0.99 / 0.1) + 0.01).epsilon(1e-14));
  }
  SUBCASE("independent of the ambient dimension") {
    in.dimension = 2;
    const double a = bound_ada_m(in).value;
    in.dimension = 64;
    CHECK(bound_ada_m(in).value == a);
    in.sampling_r = true;
    const double b = bound_ada_m(in).value;
    in.dimension = 2;
    CHECK(bound_ada_m(in).value == b);
  }
  SUBCASE("constant scales the unspecified terms") {
    const double base = bound_ada_m(in).value;
    in.constant = 2;
    const double L = intrinsic_log_factor(in);
    CHECK(bound_ada_m(in).value - base == doctest::Approx(0.2 * L * std::log(9.9)).epsilon(1e-13));
  }
  SUBCASE("parameter ranges") {
    auto bad = in;
    bad.moment_radius = 2.9;
    CHECK_THROWS_AS(bound_ada_m(bad), std::invalid_argument);
    bad = in;
    bad.eps0 = 0.4;
    CHECK_THROWS_AS(bound_ada_m(bad), std::invalid_argument);
    bad.eps0 = 0;
    CHECK_THROWS_AS(bound_ada_m(bad), std::invalid_argument);
    bad = in;
    bad.delta = 0;
    CHECK_THROWS_AS(bound_ada_m(bad), std::invalid_argument);
    bad = in;
    bad.intrinsic_dim = 0.5;
    CHECK_THROWS_AS(bound_ada_m(bad), std::invalid_argument);
    bad = in;
    bad.t0 = 0.7;
    CHECK(!bound_ada_m(bad).hypotheses_hold);
  }
  SUBCASE("companion forms are uncertified") {
    in.intrinsic_dim = 3;
    in.steps = 20;
    CHECK(!bound_ada_low_dimension(in).certified);
    CHECK(!bound_ada_dimension_free(in).certified);
    const double klogk = 3 * std::log(3.0);
    CHECK(bound_ada_low_dimension(in).value ==
          doctest::Approx(0.04 + 0.2 * std::min(4.0, klogk * std::log(100.0)) + 0.04 * 20 * klogk + 0.01)
              .epsilon(1e-14));
    const double ck = 0.2 * 3 * std::log(10.0);
    CHECK(bound_ada_dimension_free(in).value ==
          doctest::Approx(0.04 + 3.2 + ck * std::log(9.9) + 0.01).epsilon(1e-14));
  }
}

TEST_CASE("covering number") {
  SUBCASE("small cases") {
    CHECK(covering_number<double>(M::Constant(1, 3, 0.5), 0.01) == 1);
    M two(2, 2);
    two << 0, 0, 1, 0;
    CHECK(covering_number<double>(two, 0.4) == 2);
    CHECK(covering_number<double>(two, 1.5) == 1);
    CHECK(covering_number<double>(M(0, 2), 0.1) == 0);
    CHECK_THROWS_AS(covering_number<double>(two, 0.0), std::invalid_argument);
  }
  SUBCASE("segment of 100 points in d = 8") {
    std::mt19937_64 gen(3);
    const M p = segment(100, 8, gen);
    const auto net = epsilon_net(p, 0.1);
    const auto expect = farthest_point_oracle(p, 0.1);
    CHECK(net == expect);
    CHECK(net.size() == 9);
    CHECK(net.size() >= 5);
    CHECK(net.size() <= 11);
    CHECK(separated(p, net, 0.1));
    CHECK(covers(p, net, 0.1));
  }
  SUBCASE("maximal net among all subsets of small random sets") {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(0, 1);
    for (int r = 0; r < 30; ++r) {
      M p(10, 2);
      for (Index i = 0; i < 10; ++i) p(i, 0) = u(gen), p(i, 1) = u(gen);
      const double eps = 0.15 + 0.3 * u(gen);
      // every subset that is eps-separated and covers is a maximal net
      std::size_t lo = 99, hi = 0;
      for (unsigned mask = 1; mask < (1u << 10); ++mask) {
        std::vector<Index> s;
        for (Index i = 0; i < 10; ++i)
          if (mask & (1u << i)) s.push_back(i);
        if (separated(p, s, eps) && covers(p, s, eps)) lo = std::min(lo, s.size()), hi = std::max(hi, s.size());
      }
      const auto net = epsilon_net(p, eps);
      CHECK(separated(p, net, eps));
      CHECK(covers(p, net, eps));
      CHECK(net.size() >= lo);
      CHECK(net.size() <= hi);
      CHECK(net == farthest_point_oracle(p, eps));
    }
  }
  SUBCASE("nonincreasing in eps") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> z;
    M p(300, 5);
    for (Index i = 0; i < p.rows(); ++i)
      for (Index k = 0; k < 5; ++k) p(i, k) = z(gen);
    Index prev = p.rows() + 1;
    for (double eps = 0.05; eps < 6; eps *= 1.2) {
      const Index c = covering_number(p, eps);
      CHECK(c <= prev);
      prev = c;
    }
    CHECK(prev == 1);
  }
}

TEST_CASE("Gaussian width") {
  const RandomStream rs(17);
  SUBCASE("singleton") {
    const auto w = gaussian_width<double>(M::Ones(1, 4), 0.5, 100, rs);
    CHECK(w.value == 0);
  }
  SUBCASE("collinear set: width is the longest admissible difference times E|N(0,1)|") {
    std::mt19937_64 gen(2);
    const M p = segment(50, 2, gen);
    const double eps = 0.2;
    // longest admissible difference on the lattice j/49
    const double longest = std::floor(eps * 49) / 49;
    const auto w = gaussian_width(p, eps, 20000, rs);
    CHECK(w.z_score(longest * std::sqrt(2 / std::numbers::pi)) < 4);
  }
  SUBCASE("embedding does not change the width") {
    std::mt19937_64 gen(6);
    M base(40, 2);
    std::uniform_real_distribution<double> u(0, 1);
    for (Index i = 0; i < 40; ++i) base(i, 0) = u(gen), base(i, 1) = 0.5 * base(i, 0);
    // isometric embedding into R^32 through orthonormal columns
    std::normal_distribution<double> z;
    M g(32, 2);
    for (Index i = 0; i < 32; ++i) g(i, 0) = z(gen), g(i, 1) = z(gen);
    const M q = Eigen::HouseholderQR<M>(g).householderQ() * M::Identity(32, 2);
    const M lifted = base * q.transpose();
    const auto a = gaussian_width(base, 0.15, 20000, rs);
    const auto b = gaussian_width(lifted, 0.15, 20000, rs.fork(1));
    CHECK(std::abs(a.value - b.value) < 4 * std::hypot(a.std_error, b.std_error));
  }
  SUBCASE("never above eps sqrt(d)") {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> z;
    for (Index d : {2, 8, 32}) {
      M p(60, d);
      for (Index i = 0; i < p.rows(); ++i)
        for (Index k = 0; k < d; ++k) p(i, k) = 0.3 * z(gen);
      for (double eps : {0.2, 0.5, 1.0}) {
        const auto w = gaussian_width(p, eps, 500, rs);
        CHECK(w.value <= eps * std::sqrt(double(d)) + 4 * w.std_error);
      }
    }
  }
}

TEST_CASE("intrinsic-dimension feasibility") {
  const RandomStream rs(23);
  std::mt19937_64 gen(12);
  SUBCASE("a segment is one-dimensional") {
    const M p = segment(100, 8, gen);
    const auto c = check_intrinsic(p, 1.0, 0.1, 0.01, 2000, rs);
    CHECK(c.covering == 9);
    CHECK(c.covering_ok);
    CHECK(c.scale_ok);
    CHECK(c.width_ok);
    CHECK(c.holds());
  }
  SUBCASE("a full-dimensional cloud is not") {
    std::normal_distribution<double> z;
    M p(400, 8);
    for (Index i = 0; i < p.rows(); ++i)
      for (Index k = 0; k < 8; ++k) p(i, k) = z(gen);
    const auto c = check_intrinsic(p, 1.0, 0.3, 0.01, 200, rs);
    CHECK(!c.covering_ok);
    CHECK(!c.holds());
  }
  SUBCASE("scale condition") {
    const M p = segment(20, 3, gen);
    CHECK(!check_intrinsic(p, 1.0, 0.3, 1e-4, 100, rs).scale_ok);
  }
}
