#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hkq/io.hpp"
#include "hkq/pinney.hpp"
#include "hkq/time_warp.hpp"
#include "support/oracles.hpp"

using namespace hkq;

namespace {
const FrequencyProfile kModulated = FrequencyProfile::modulated(1.0, 0.2, 1.3);
}

TEST_CASE("frequency profiles evaluate omega^2") {
  const FrequencyProfile c = FrequencyProfile::constant(2.0);
  CHECK(c.omega2(0.7) == doctest::Approx(4.0));

  const FrequencyProfile m = FrequencyProfile::modulated(1.0, 0.2, 1.3);
  CHECK(m.omega2(0.0) == doctest::Approx(1.2));
  CHECK(m.omega2(M_PI / 1.3) == doctest::Approx(0.8));

  const FrequencyProfile tab =
      FrequencyProfile::tabulated({0.0, 1.0, 2.0, 3.0}, {1.0, 2.0, 2.0, 1.5});
  CHECK(tab.omega2(1.0) == doctest::Approx(2.0));   // hits samples exactly
  CHECK(tab.omega2(2.0) == doctest::Approx(2.0));
  CHECK(tab.omega2(1.5) <= 2.0 + 1e-12);            // monotone segments do not overshoot
  CHECK(tab.omega2(1.5) >= 2.0 - 1e-12);
  CHECK(tab.t_min() == 0.0);
  CHECK(tab.t_max() == 3.0);
  CHECK_THROWS_AS(tab.omega2(3.5), std::out_of_range);

  CHECK_THROWS_AS(FrequencyProfile::tabulated({0.0, 0.0, 1.0}, {1.0, 1.0, 1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(FrequencyProfile::tabulated({1.0, 0.5}, {1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("profile json round trip") {
  for (const auto& text : {R"({"kind":"constant","omega0":1.5})",
                           R"({"kind":"modulated","omega0":1.0,"eps":0.2,"gamma":1.3})",
                           R"({"kind":"tabulated","t":[0,1,2],"omega2":[1.0,1.1,0.9]})"}) {
    const auto j = nlohmann::json::parse(text);
    const FrequencyProfile p = io::profile_from_json(j);
    const FrequencyProfile q = io::profile_from_json(io::profile_to_json(p));
    for (double t : {0.0, 0.5, 1.0, 1.9}) CHECK(p.omega2(t) == doctest::Approx(q.omega2(t)));
  }
  CHECK_THROWS(io::profile_from_json(nlohmann::json::parse(R"({"kind":"sawtooth"})")));
}

TEST_CASE("constant profile at equilibrium stays constant") {
  const FrequencyProfile prof = FrequencyProfile::constant(1.0);
  const PinneySolution sol = solve_pinney(prof, 1.0, 1.0, 0.0, 0.0, 10.0, 1e-10);
  for (double t : {0.0, 1.0, 3.3, 7.7, 10.0}) {
    CHECK(std::abs(sol.rho(t) - 1.0) < 1e-13);
    CHECK(std::abs(sol.rho_dot(t)) < 1e-13);
    CHECK(std::abs(pinney_residual(sol, prof, t)) < 1e-12);
  }
}

TEST_CASE("equilibrium amplitude is sqrt(Omega/omega)") {
  // omega = 2, Omega = 1: rho* = 2^{-1/2}; residual vanishes algebraically
  const FrequencyProfile prof = FrequencyProfile::constant(2.0);
  const double rho_star = std::sqrt(0.5);
  const PinneySolution sol = solve_pinney(prof, 1.0, rho_star, 0.0, 0.0, 5.0, 1e-10);
  for (double t : {0.0, 0.5, 2.0, 5.0}) {
    CHECK(std::abs(sol.rho(t) - rho_star) < 1e-12);
    CHECK(std::abs(pinney_residual(sol, prof, t)) < 1e-11);
  }
  CHECK(default_rho0(prof, 1.0, 0.0) == doctest::Approx(rho_star));
}

TEST_CASE("modulated profile: defect below tolerance everywhere") {
  const double tol = 1e-9;
  const PinneySolution sol = solve_pinney(kModulated, 1.0, 1.0, 0.0, 0.0, 20.0, tol);
  CHECK(sol.residual_bound() <= tol);

  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> uni(0.0, 20.0);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i)
    worst = std::max(worst, std::abs(pinney_residual(sol, kModulated, uni(gen))));
  for (double t : sol.grid()) worst = std::max(worst, std::abs(pinney_residual(sol, kModulated, t)));
  CHECK(worst < 1e-8);
}

TEST_CASE("modulated profile: matches the two-solution closed form") {
  const PinneySolution sol = solve_pinney(kModulated, 1.0, 1.0, 0.0, 0.0, 20.0, 1e-9);
  auto w2 = [](double t) { return 1.0 + 0.2 * std::cos(1.3 * t); };
  for (double t : {0.5, 3.0, 9.6, 14.2, 19.5}) {
    const double ref = oracle::pinney_closed_form(w2, 1.0, 1.0, 0.0, 0.0, t, 200000);
    CHECK(std::abs(sol.rho(t) - ref) < 1e-8);
  }
}

TEST_CASE("rho stays positive for random initial data") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> rho0_dist(0.3, 2.5);
  std::uniform_real_distribution<double> v0_dist(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double rho0 = rho0_dist(gen);
    const double v0 = v0_dist(gen);
    const PinneySolution sol = solve_pinney(kModulated, 1.0, rho0, v0, 0.0, 12.0, 1e-8);
    CHECK(sol.residual_bound() <= 1e-8);
    for (double r : sol.rho_nodes()) CHECK(r > 0.0);
  }
}

TEST_CASE("solver argument validation") {
  CHECK_THROWS_AS(solve_pinney(kModulated, 0.0, 1.0, 0.0, 0.0, 1.0, 1e-9),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_pinney(kModulated, -1.0, 1.0, 0.0, 0.0, 1.0, 1e-9),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_pinney(kModulated, 1.0, -0.5, 0.0, 0.0, 1.0, 1e-9),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_pinney(kModulated, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("identity warp") {
  const FrequencyProfile prof = FrequencyProfile::constant(1.0);
  const TimeWarp warp(solve_pinney(prof, 1.0, 1.0, 0.0, 0.0, 5.0, 1e-10));
  CHECK(warp.warp(0.0) == doctest::Approx(0.0));
  CHECK(std::abs(warp.warp(3.7) - 3.7) < 1e-12);
  CHECK(std::abs(warp.unwarp(3.7) - 3.7) < 1e-12);
}

TEST_CASE("constant-rho warp is linear: T = (omega/Omega) t") {
  const FrequencyProfile prof = FrequencyProfile::constant(2.0);
  const TimeWarp warp(solve_pinney(prof, 1.0, std::sqrt(0.5), 0.0, 0.0, 3.0, 1e-10));
  CHECK(std::abs(warp.warp(1.0) - 2.0) < 1e-10);
  CHECK(std::abs(warp.unwarp(2.0) - 1.0) < 1e-10);
}

TEST_CASE("warp round trip and monotonicity on the modulated profile") {
  const TimeWarp warp(solve_pinney(kModulated, 1.0, 1.0, 0.0, 0.0, 20.0, 1e-9));
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> uni(0.0, warp.T_end());
  for (int i = 0; i < 50; ++i) {
    const double T = uni(gen);
    CHECK(std::abs(warp.warp(warp.unwarp(T)) - T) < 1e-10);
  }
  // strictly increasing with derivative 1/rho^2
  const auto grid = warp.pinney().grid();
  for (std::size_t k = 1; k + 1 < grid.size(); k += 7) {
    const double t = grid[k];
    const double h = 1e-5;
    const double dT = (warp.warp(t + h) - warp.warp(t - h)) / (2.0 * h);
    const double rho = warp.pinney().rho(t);
    CHECK(std::abs(dT - 1.0 / (rho * rho)) < 1e-8);
  }
  CHECK_THROWS_AS(warp.warp(-1.0), std::out_of_range);
  CHECK_THROWS_AS(warp.warp(21.0), std::out_of_range);
  CHECK_THROWS_AS(warp.unwarp(warp.T_end() + 1.0), std::out_of_range);
}

TEST_CASE("two distinct Pinney solutions both satisfy the equation") {
  // the rescaling admits a whole family of solutions; each warps consistently
  for (auto [rho0, v0] : {std::pair{1.0, 0.0}, std::pair{1.4, 0.3}}) {
    const PinneySolution sol = solve_pinney(kModulated, 1.0, rho0, v0, 0.0, 10.0, 1e-9);
    CHECK(sol.residual_bound() <= 1e-9);
    const TimeWarp warp(sol);
    const auto T = warp.node_T();
    for (std::size_t i = 0; i + 1 < T.size(); ++i) CHECK(T[i] < T[i + 1]);
  }
}

TEST_CASE("pinney csv export") {
  const FrequencyProfile prof = FrequencyProfile::constant(1.0);
  const PinneySolution sol = solve_pinney(prof, 1.0, 1.0, 0.0, 0.0, 2.0, 1e-10);
  const TimeWarp warp(sol);
  const std::string csv = io::pinney_csv(sol, warp, prof);
  CHECK(csv.rfind("t,rho,rho_dot,T,residual\n", 0) == 0);
  // one row per node plus header
  const std::size_t rows = std::count(csv.begin(), csv.end(), '\n');
  CHECK(rows == sol.grid().size() + 1);
}
