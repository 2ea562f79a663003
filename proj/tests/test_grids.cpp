#include <doctest.h>

#include <cmath>
#include <random>

#include "follmer/grids.hpp"
#include "random_grids.hpp"

using namespace follmer;
using V = VectorX<double>;

TEST_CASE("uniform t grid") {
  SUBCASE("ten points to one") {
    const auto g = grid_uniform_t(0.1, 0.0, 9);
    CHECK(g.steps() == 9);
    for (Index i = 0; i <= 9; ++i) CHECK(g[i] == doctest::Approx(0.1 * double(i + 1)).epsilon(1e-15));
    CHECK(g.t_final() == 1.0);
    CHECK(g.max_step() == doctest::Approx(0.1));
    CHECK(g.delta() == 0.0);
    CHECK(std::isinf(g.kappa_a1()));
  }
  SUBCASE("kappa values") {
    const auto g = grid_uniform_t(0.1, 0.1, 4);
    CHECK(g.kappa_a1() == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(g.kappa_sampling_r() == doctest::Approx(1.0 / 3).epsilon(1e-14));
    const auto f = check_assumptions(g);
    CHECK(f.a1_holds(2.0 + 1e-12));
    CHECK(!f.a1_holds(1.9));
    CHECK(f.t0_at_most_half);
  }
  SUBCASE("provenance") {
    const auto g = grid_uniform_t(0.2, 0.05, 7);
    CHECK(g.provenance().constructor == GridConstructor::UniformT);
    CHECK(g.provenance().t0 == 0.2);
    CHECK(g.provenance().delta == 0.05);
    CHECK(g.provenance().steps == 7);
    CHECK(std::string(to_string(g.provenance().constructor)) == "uniform_t");
  }
  SUBCASE("rejects degenerate and inconsistent bounds") {
    CHECK_THROWS_AS(grid_uniform_t(0.5, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(grid_uniform_t(0.0, 0.1, 4), std::invalid_argument);
    CHECK_THROWS_AS(grid_uniform_t(0.1, 1.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(grid_uniform_t(0.1, -0.1, 4), std::invalid_argument);
    CHECK_THROWS_AS(grid_uniform_t(0.1, 0.1, 0), std::invalid_argument);
  }
}

TEST_CASE("uniform tau grid") {
  SUBCASE("geometric points") {
    const auto g = grid_uniform_tau(0.1, 0.1, 4);
    const double r = std::pow(9.0, 0.25);
    const double expect[] = {0.1, 0.1 * r, 0.1 * r * r, 0.1 * r * r * r, 0.9};
    for (Index i = 0; i <= 4; ++i) CHECK(g[i] == doctest::Approx(expect[i]).epsilon(1e-14));
    CHECK(g.kappa_a1() == doctest::Approx((0.9 - 0.1 * r * r * r) / 0.1).epsilon(1e-13));
    CHECK(g.kappa_a1() == doctest::Approx(3.804).epsilon(1e-4));
  }
  SUBCASE("rejects t_N = t_0") { CHECK_THROWS_AS(grid_uniform_tau(0.25, 0.75, 3), std::invalid_argument); }
  SUBCASE("uniform tau spacing") {
    const double t0 = std::exp(-2.0), delta = 1 - std::exp(-1.0);
    const auto g = grid_uniform_tau(t0, delta, 16);
    CHECK(g.horizon() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g.tau(0) == 0.0);
    const double first = g.tau(1) - g.tau(0);
    for (Index i = 0; i < 16; ++i) CHECK(std::abs((g.tau(i + 1) - g.tau(i)) - first) < 1e-12);
    CHECK(std::string(to_string(g.provenance().constructor)) == "uniform_tau");
  }
}

TEST_CASE("explicit grids") {
  SUBCASE("single interval") {
    V t(2);
    t << 0.3, 0.8;
    const TimeGrid<double> g(t);
    CHECK(g.steps() == 1);
    CHECK(g.max_step() == doctest::Approx(0.5));
    CHECK(g.kappa_a1() == doctest::Approx(0.5 / 0.2));
    CHECK(g.kappa_sampling_r() == doctest::Approx(0.5 / 1.8));
    CHECK(std::isfinite(g.kappa_tau()));
    CHECK(g.provenance().constructor == GridConstructor::Explicit);
    CHECK(g.provenance().steps == 1);
    CHECK(g.provenance().delta == doctest::Approx(0.2));
  }
  SUBCASE("validation") {
    V one(1);
    one << 0.5;
    CHECK_THROWS_AS(TimeGrid<double>{one}, std::invalid_argument);
    V bad(3);
    bad << 0.1, 0.1, 0.5;
    CHECK_THROWS_AS(TimeGrid<double>{bad}, std::invalid_argument);
    bad << 0.0, 0.2, 0.5;
    CHECK_THROWS_AS(TimeGrid<double>{bad}, std::invalid_argument);
    bad << 0.1, 0.2, 1.5;
    CHECK_THROWS_AS(TimeGrid<double>{bad}, std::invalid_argument);
    bad << 0.1, 0.4, 0.3;
    CHECK_THROWS_AS(TimeGrid<double>{bad}, std::invalid_argument);
  }
}

TEST_CASE("tau and t conversions") {
  CHECK(tau_of_t(1.0, 2.0) == 2.0);
  CHECK(tau_of_t(0.5, 2.0) == doctest::Approx(2 + 0.5 * std::log(0.5)));
  const auto g = grid_uniform_tau(0.01, 0.05, 10);
  CHECK(g.tau(0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(g.tau(0)) < 1e-15);
  CHECK_THROWS_AS(tau_of_t(0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(tau_of_t(1.5, 1.0), std::domain_error);
  CHECK_THROWS_AS(t_of_tau(2.5, 2.0), std::domain_error);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  double worst = 0;
  for (int r = 0; r < 1000; ++r) {
    const double t = u(gen), horizon = 0.5 + 5 * u(gen);
    worst = std::max(worst, std::abs(t_of_tau(tau_of_t(t, horizon), horizon) - t) / t);
  }
  CHECK(worst < 1e-14);
}

TEST_CASE("random tau grids: A1 follows with the same kappa") {
  std::mt19937_64 gen(2024);
  int checked = 0;
  double worst_ratio = 0;
  while (checked < 1000) {
    const auto [g, kappa] = testgrids::random_tau_grid(gen);
    const double k_tau = g.kappa_tau();
    REQUIRE(k_tau <= kappa * (1 + 1e-9));
    if (k_tau > 1) continue;
    ++checked;
    CHECK(g.kappa_a1() <= k_tau * (1 + 1e-12));
    worst_ratio = std::max(worst_ratio, g.kappa_sampling_r() / k_tau);
    // the constant that does follow for kappa <= 1
    CHECK(g.kappa_sampling_r() <= (std::exp(2.0) - 1) / 6 * k_tau * (1 + 1e-12));
  }
  CHECK(worst_ratio <= (std::exp(2.0) - 1) / 6);
}

TEST_CASE("sampling-r does not follow from the tau condition near kappa = 1") {
  const double horizon = 2;
  V t(4);
  t << std::exp(-4.0), std::exp(-2.0), std::exp(-1.0), std::exp(-0.5);
  const TimeGrid<double> g(t);
  CHECK(g.horizon() == doctest::Approx(horizon));
  CHECK(g.kappa_tau() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.kappa_a1() <= 1.0);
  CHECK(g.kappa_sampling_r() == doctest::Approx((std::exp(2.0) - 1) / 6).epsilon(1e-12));
  CHECK(g.kappa_sampling_r() > g.kappa_tau());
}

TEST_CASE("horizon gap and step-count inequalities on every constructed grid") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int r = 0; r < 2000; ++r) {
    const double t0 = std::exp(-12 * u(gen)) * 0.9;
    const double delta = (1 - t0) * (0.001 + 0.9 * u(gen));
    const Index n = 1 + Index(200 * u(gen));
    for (const auto& g : {grid_uniform_t(t0, delta, n), grid_uniform_tau(t0, delta, n)}) {
      const double d = g.delta();
      const double gap = g.horizon() - g.tau(g.steps());
      CHECK(gap >= 0.5 * d * (1 - 1e-12));
      CHECK(gap <= d / (2 * (1 - d)) * (1 + 1e-12));
      CHECK(std::log((1 - g.t0()) / d) <= g.kappa_a1() * double(n) * (1 + 1e-12));
    }
  }
}

TEST_CASE("single precision grid") {
  const auto g = grid_uniform_tau(0.01f, 0.01f, 8);
  CHECK(g.steps() == 8);
  CHECK(g.kappa_a1() > 0.0f);
  CHECK(g.t_final() == doctest::Approx(0.99f));
}
