#include <doctest.h>

#include <cmath>
#include <random>

#include "follmer/follmer.hpp"

using namespace follmer;
using V = VectorX<double>;
using M = MatrixX<double>;

namespace {

ScoreModel<double> zero_score(const Mixture<double>& mu) {
  Perturbation<double> p;
  p.scale = -1;
  return ScoreModel<double>::perturbed(mu, p);
}

TimeGrid<double> grid_of(std::initializer_list<double> t) {
  V out(static_cast<Index>(t.size()));
  Index i = 0;
  for (double x : t) out(i++) = x;
  return TimeGrid<double>(out);
}

double max_rel_gap(const M& a, const M& b) {
  return ((a - b).array().abs() / (1 + a.array().abs())).maxCoeff();
}

}  // namespace

TEST_CASE("DDPM parameter mappings") {
  const auto g = grid_of({0.25, 0.5, 1.0});
  SUBCASE("standard") {
    const auto p = params_standard(g);
    CHECK(p.alpha(0) == 0.5);
    CHECK(p.alpha(1) == 0.5);
    CHECK(p.alpha(2) == 1.0);
    CHECK(p.eta(0) == 0.5);
    CHECK(p.sigma(0) == 0.5);
    CHECK(p.alpha_bar()(0) == 0.25);
    CHECK(p.steps() == 2);
  }
  SUBCASE("ada variance, both closed forms") {
    const auto p = params_ada(g);
    CHECK(p.sigma(0) * p.sigma(0) == doctest::Approx(1.0 / 6).epsilon(1e-15));
    CHECK(0.25 * 0.25 * 0.5 / (0.25 * 0.75) == doctest::Approx(1.0 / 6));
    CHECK(p.eta(0) == 0.5);
  }
  SUBCASE("exponential integrator") {
    const auto p = params_expint(g);
    CHECK(p.eta(0) == doctest::Approx(2 * (1 - std::sqrt(0.5))));
    CHECK(p.sigma(0) == doctest::Approx(std::sqrt(0.5)));
  }
  SUBCASE("alpha_bar telescopes to t_i on random grids") {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int r = 0; r < 200; ++r) {
      const auto grid = grid_uniform_tau(1e-4 + 0.3 * u(gen), 0.5 * u(gen), 1 + Index(100 * u(gen)));
      const V bar = params_standard(grid).alpha_bar();
      for (Index i = 0; i <= grid.steps(); ++i) CHECK(std::abs(bar(i) - grid[i]) <= 1e-13 * grid[i]);
    }
  }
  SUBCASE("expint approaches standard as the grid refines") {
    double prev = std::numeric_limits<double>::infinity();
    for (Index n : {8, 32, 128, 512}) {
      const auto grid = grid_uniform_tau(0.01, 0.01, n);
      const auto s = params_standard(grid), e = params_expint(grid);
      const double gap = std::max(((s.eta - e.eta).array().abs() / s.eta.array()).maxCoeff(),
                                  ((s.sigma - e.sigma).array().abs() / s.sigma.array()).maxCoeff());
      CHECK(gap < prev);
      prev = gap;
    }
    CHECK(prev < 0.02);
  }
  SUBCASE("validation") {
    auto p = params_standard(g);
    p.sigma.resize(1);
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = params_standard(g);
    p.alpha(0) = 1.5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }
}

TEST_CASE("Euler-Maruyama") {
  const RandomStream rs(11);
  SUBCASE("standard Gaussian with the exact score is exact") {
    const auto mu = Mixture<double>::standard_gaussian(2);
    const auto g = grid_uniform_t(0.05, 0.1, 12);
    const auto law = propagate_gaussian_law(Scheme::EM, g, ScoreModel<double>::exact(mu));
    CHECK(law.mean.norm() < 1e-14);
    CHECK((law.covariance - g.t_final() * M::Identity(2, 2)).norm() < 1e-13);
    const auto run = run_em(g, ScoreModel<double>::exact(mu), 50000, rs);
    for (Index c = 0; c < 2; ++c)
      CHECK(mean_estimate(run.terminal.col(c).array().square().matrix()).z_score(g.t_final()) < 4);
  }
  SUBCASE("zero score: Monte Carlo matches the propagated law") {
    const auto mu = Mixture<double>::point_mass(V::Ones(2));
    const auto g = grid_uniform_tau(0.05, 0.1, 8);
    const auto s = zero_score(mu);
    const auto law = propagate_gaussian_law(Scheme::EM, g, s);
    const auto run = run_em(g, s, 50000, rs);
    for (Index c = 0; c < 2; ++c)
      CHECK(mean_estimate(run.terminal.col(c).array().square().matrix()).z_score(law.covariance(c, c)) < 4);
  }
  SUBCASE("one step to t = 1 for a point mass against a brute-force oracle") {
    const double a = 1.7;
    const auto mu = Mixture<double>::point_mass(V::Constant(1, a));
    const auto g = grid_of({0.5, 1.0});
    const auto run = run_em(g, ScoreModel<double>::exact(mu), 200000, rs);
    // independent oracle: X0 = sqrt(.5) Z0, X1 = X0 + (X0/.5 - (X0 - .5a)/.25) .5 + sqrt(.5) Z1
    std::mt19937_64 gen(99);
    std::normal_distribution<double> n01;
    V oracle(1000000);
    for (Index j = 0; j < oracle.size(); ++j) {
      const double x0 = std::sqrt(0.5) * n01(gen);
      oracle(j) = x0 + (x0 / 0.5 - (x0 - 0.5 * a) / 0.25) * 0.5 + std::sqrt(0.5) * n01(gen);
    }
    const auto mc = mean_estimate(run.terminal.col(0));
    const auto ref = mean_estimate(oracle);
    CHECK(difference(mc, ref).z_score() < 3);
    const auto law = propagate_gaussian_law(Scheme::EM, g, ScoreModel<double>::exact(mu));
    CHECK(law.mean(0) == doctest::Approx(a));
    const V sq = (run.terminal.col(0).array() - a).square().matrix();
    CHECK(mean_estimate(sq).z_score(law.covariance(0, 0)) < 4);
  }
}

TEST_CASE("posterior-mean-only scheme") {
  const RandomStream rs(13);
  SUBCASE("initial variance t0 (1 - t0)") {
    const auto mu = Mixture<double>::standard_gaussian(1);
    const auto g = grid_uniform_tau(0.2, 0.1, 4);
    const auto run = run_ada(g, ScoreModel<double>::exact(mu), 100, rs, true);
    const auto em = run_em(g, ScoreModel<double>::exact(mu), 100, rs, true);
    CHECK(run.trajectory.size() == 5);
    for (Index j = 0; j < 100; ++j) {
      const double z0 = standard_normal<double>(rs, static_cast<std::uint64_t>(j), 0, 1)(0);
      CHECK(run.trajectory[0](j, 0) == std::sqrt(0.2 * 0.8) * z0);
      CHECK(em.trajectory[0](j, 0) == std::sqrt(0.2) * z0);
    }
  }
  SUBCASE("noise-only steps have variance h (1 - t_{i+1}) / (1 - t_i)") {
    const auto mu = Mixture<double>::standard_gaussian(2);
    const auto g = grid_uniform_tau(0.05, 0.2, 5);
    const auto run = run_ada(g, zero_score(mu), 20, rs, true);
    for (Index j = 0; j < 20; ++j)
      for (Index i = 0; i < 5; ++i) {
        const double t = g[i], tn = g[i + 1], h = g.step(i);
        const V z = standard_normal<double>(rs, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(i + 1), 2);
        const V got = run.trajectory[i + 1].row(j).transpose() - (tn / t) * V(run.trajectory[i].row(j).transpose());
        CHECK((got - std::sqrt(h * (1 - tn) / (1 - t)) * z).norm() < 1e-13);
      }
  }
  SUBCASE("point mass with the exact score: Monte Carlo matches the propagated law") {
    V a(2);
    a << 1.0, -2.0;
    const auto mu = Mixture<double>::point_mass(a);
    const auto g = grid_uniform_tau(0.01, 0.05, 10);
    const auto s = ScoreModel<double>::exact(mu);
    const auto law = propagate_gaussian_law(Scheme::Ada, g, s);
    const auto run = run_ada(g, s, 100000, rs);
    for (Index c = 0; c < 2; ++c) {
      CHECK(mean_estimate(run.terminal.col(c)).z_score(law.mean(c)) < 4);
      const V sq = (run.terminal.col(c).array() - law.mean(c)).square().matrix();
      CHECK(mean_estimate(sq).z_score(law.covariance(c, c)) < 4);
    }
    // only the initial mean is off: the exact law is N(t_N a, t_N (1 - t_N) I)
    CHECK((law.mean - g.t_final() * a).norm() < 0.05 * a.norm());
  }
}

TEST_CASE("DDPM recursion reproduces both schemes") {
  const RandomStream rs(17);
  M c(4, 4);
  c << 1.0, 0.2, 0.0, 0.1, 0.2, 0.8, 0.1, 0.0, 0.0, 0.1, 0.6, 0.2, 0.1, 0.0, 0.2, 1.2;
  const auto mu = Mixture<double>({{0.5, V::LinSpaced(4, -1, 1), c}, {0.5, V::LinSpaced(4, 1, -1), 0.5 * c}});
  const auto g = grid_uniform_tau(0.01, 0.02, 16);
  const auto s = ScoreModel<double>::exact(mu);
  const auto step = ddpm_step_scores(g, s);
  SUBCASE("standard parameters against EM, full trajectories") {
    const auto em = run_em(g, s, 300, rs, true);
    const auto dd = run_ddpm(params_standard(g), step, 4, 300, rs, DdpmInit<double>::standard(), true);
    for (Index i = 0; i <= 16; ++i)
      CHECK(max_rel_gap(em.trajectory[i] / std::sqrt(g[i]), dd.trajectory[i]) < 1e-12);
    CHECK(dd.scheme == Scheme::Ddpm);
  }
  SUBCASE("ada parameters and initial law against the posterior-mean scheme") {
    const auto ad = run_ada(g, s, 300, rs, true);
    const auto dd = run_ddpm(params_ada(g), step, 4, 300, rs, DdpmInit<double>::ada(g.t0()), true);
    for (Index i = 0; i <= 16; ++i)
      CHECK(max_rel_gap(ad.trajectory[i] / std::sqrt(g[i]), dd.trajectory[i]) < 1e-12);
  }
  SUBCASE("propagated laws agree under the x = X / sqrt(t) map") {
    const auto gm = Mixture<double>::gaussian(V::LinSpaced(4, 0.5, -0.5), c);
    const auto gs = ScoreModel<double>::exact(gm);
    const double tn = g.t_final();
    const auto em = propagate_gaussian_law(Scheme::EM, g, gs);
    const auto dd = propagate_gaussian_law_ddpm(params_standard(g), g, gs, DdpmInit<double>::standard());
    CHECK((em.mean / std::sqrt(tn) - dd.mean).norm() < 1e-12);
    CHECK((em.covariance / tn - dd.covariance).norm() < 1e-12);
    const auto ad = propagate_gaussian_law(Scheme::Ada, g, gs);
    const auto da = propagate_gaussian_law_ddpm(params_ada(g), g, gs, DdpmInit<double>::ada(g.t0()));
    CHECK((ad.covariance / tn - da.covariance).norm() < 1e-12);
  }
  SUBCASE("exponential integrator differs") {
    const auto ex = run_ddpm(params_expint(g), step, 4, 50, rs);
    const auto dd = run_ddpm(params_standard(g), step, 4, 50, rs);
    CHECK(max_rel_gap(ex.terminal, dd.terminal) > 1e-6);
  }
  SUBCASE("the sigma identity holds to 1e-12 on random grids") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int r = 0; r < 1000; ++r) {
      const auto grid = grid_uniform_tau(1e-5 + 0.4 * u(gen), 0.5 * u(gen) + 1e-4, 1 + Index(64 * u(gen)));
      CHECK_NOTHROW(params_ada(grid));
    }
  }
}

TEST_CASE("sampler runs") {
  const RandomStream rs(19);
  const auto mu = Mixture<double>::standard_gaussian(3);
  const auto g = grid_uniform_tau(0.01, 0.01, 6);
  const auto s = ScoreModel<double>::exact(mu);
  SUBCASE("row counts and trajectories") {
    CHECK(run_em(g, s, 0, rs).terminal.rows() == 0);
    const auto r = run_ada(g, s, 7, rs);
    CHECK(r.paths() == 7);
    CHECK(r.trajectory.empty());
    CHECK(run_em(g, s, 5, rs, true).trajectory.size() == 7);
    CHECK_THROWS_AS(run_em(g, s, -1, rs), std::invalid_argument);
  }
  SUBCASE("independent of the thread count") {
    set_thread_count(1);
    const auto a = run_ada(g, s, 500, rs);
    set_thread_count(3);
    const auto b = run_ada(g, s, 500, rs);
    set_thread_count(1);
    CHECK(a.terminal == b.terminal);
  }
  SUBCASE("non-affine scores cannot be propagated") {
    CHECK_THROWS_AS(propagate_gaussian_law(Scheme::EM, g, ScoreModel<double>::exact(Mixture<double>::point_set(M::Identity(2, 2)))),
                    std::invalid_argument);
  }
}

TEST_CASE("propagated covariance approaches the exact marginal under refinement") {
  M c(2, 2);
  c << 2.0, 0.5, 0.5, 0.5;
  const auto mu = Mixture<double>::gaussian(V::LinSpaced(2, 1, -1), c);
  const auto s = ScoreModel<double>::exact(mu);
  for (Scheme scheme : {Scheme::EM, Scheme::Ada}) {
    double prev = std::numeric_limits<double>::infinity();
    for (Index n : {4, 8, 16, 32}) {
      const auto g = grid_uniform_tau(0.01, 0.01, n);
      const double t = g.t_final();
      const M exact = t * t * c + t * (1 - t) * M::Identity(2, 2);
      const double gap = (propagate_gaussian_law(scheme, g, s).covariance - exact).squaredNorm();
      CHECK(gap < prev);
      prev = gap;
    }
  }
}

TEST_CASE("single precision sampler") {
  const auto mu = Mixture<float>::standard_gaussian(2);
  const auto g = grid_uniform_tau(0.01f, 0.01f, 8);
  const auto run = run_ada(g, ScoreModel<float>::exact(mu), 100, RandomStream(1));
  CHECK(run.terminal.allFinite());
  const auto law = propagate_gaussian_law(Scheme::EM, g, ScoreModel<float>::exact(mu));
  CHECK(law.covariance(0, 0) == doctest::Approx(0.99f).epsilon(1e-4));
}
