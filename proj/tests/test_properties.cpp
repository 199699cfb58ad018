#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dcharge/battery.hpp"
#include "dcharge/dataset.hpp"
#include "dcharge/expert.hpp"
#include "dcharge/policy.hpp"

using namespace dcharge;

namespace {

// Small hand-rolled generators; every property runs over `kCases` draws.
constexpr int kCases = 200;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

  BatteryParams params() {
    BatteryParams p;
    p.capacity_ah = uniform(5.5, 8.0);
    p.r_sei_ohm = uniform(0.014, 0.019);
    p.c_core = uniform(50.0, 300.0);
    p.c_surf = uniform(5.0, 30.0);
    p.r_core_surf = uniform(1.0, 5.0);
    p.r_surf_env = uniform(2.0, 10.0);
    return p;
  }
  BatteryState state() {
    return {uniform(0.0, 1.0), uniform(298.15, 313.15), uniform(298.15, 313.15), uniform(-10.0, 10.0), false};
  }
  double current() { return uniform(-10.0, 10.0); }
};

}  // namespace

TEST_CASE("property: soc integrates in closed form for constant current") {
  Gen g(1);
  for (int n = 0; n < kCases; ++n) {
    BatteryParams p = g.params();
    BatteryState s = g.state();
    const double i = g.current(), dt = g.uniform(1.0, 30.0);
    const int k = g.integer(1, 40);
    BatteryState x = s;
    for (int j = 0; j < k; ++j) x = step(x, p, i, dt, SocLimit::free);
    const double expected = s.soc + k * i * dt / (3600.0 * p.capacity_ah);
    CHECK(std::abs(x.soc - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("property: clamped soc stays in the unit interval") {
  Gen g(2);
  for (int n = 0; n < kCases; ++n) {
    BatteryParams p = g.params();
    BatteryState s = g.state();
    for (int j = 0; j < 50; ++j) {
      s = step(s, p, g.current() * 5.0, 60.0);
      CHECK(s.soc >= 0.0);
      CHECK(s.soc <= 1.0);
      CHECK(s.t_core > 0.0);
      CHECK(s.t_surf > 0.0);
    }
  }
}

TEST_CASE("property: terminal voltage increases with soc at fixed current") {
  Gen g(3);
  for (int n = 0; n < kCases; ++n) {
    BatteryParams p = g.params();
    const double i = g.current();
    double a = g.uniform(0.0, 1.0), b = g.uniform(0.0, 1.0);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    BatteryState lo{a, 300.0, 300.0, 0.0, false}, hi{b, 300.0, 300.0, 0.0, false};
    CHECK(terminal_voltage(lo, p, i) < terminal_voltage(hi, p, i));
  }
}

TEST_CASE("property: heat generation is non-negative") {
  Gen g(4);
  for (int n = 0; n < kCases; ++n) CHECK(heat_generation(g.state(), g.params(), g.current() * 3.0) >= 0.0);
}

TEST_CASE("property: simulation is bit-reproducible") {
  Gen g(5);
  for (int n = 0; n < 50; ++n) {
    BatteryParams p = g.params();
    BatteryState a = g.state(), b = a;
    for (int j = 0; j < 20; ++j) {
      const double i = g.current();
      a = step(a, p, i, 10.0);
      b = step(b, p, i, 10.0);
    }
    CHECK(a.soc == b.soc);
    CHECK(a.t_core == b.t_core);
    CHECK(a.t_surf == b.t_surf);
  }
}

TEST_CASE("property: expert actions are feasible, deterministic and never worse than idling") {
  Gen g(6);
  for (int n = 0; n < 100; ++n) {
    BatteryParams p = g.params();
    BatteryState s = g.state();
    ExpertConfig c;
    c.horizon = g.integer(1, 6);
    const double ref = g.uniform(0.7, 1.0);
    HorizonSolution sol = solve_horizon(s, p, ref, c);
    REQUIRE(sol.currents.size() == static_cast<std::size_t>(c.horizon));
    for (double i : sol.currents) {
      CHECK(i >= c.bounds.i_min);
      CHECK(i <= c.bounds.i_max);
    }
    std::vector<double> zeros(c.horizon, 0.0);
    CHECK(sol.cost <= augmented_cost(s, p, ref, c, zeros));
    CHECK(sol.cost == augmented_cost(s, p, ref, c, sol.currents));
    const double a = expert_action(s, p, ref, c).current, b = expert_action(s, p, ref, c).current;
    CHECK(a == b);
  }
}

TEST_CASE("property: policy output is bounded for arbitrary inputs and weights") {
  Gen g(7);
  for (int n = 0; n < 20; ++n) {
    Architecture a;
    a.n_w = g.integer(0, 5);
    a.lstm_sizes = {g.integer(1, 6), g.integer(1, 4)};
    a.dense_sizes = {g.integer(1, 6)};
    a.i_min = g.uniform(-20.0, 0.0);
    a.i_max = a.i_min + g.uniform(0.1, 30.0);
    PolicyModel m(a, n);
    for (Eigen::Index k = 0; k < m.parameters().size(); ++k) m.parameters()[k] = g.uniform(-30.0, 30.0);
    std::vector<double> w(3 * (a.n_w + 1));
    for (int r = 0; r < 50; ++r) {
      for (double& x : w) x = g.uniform(-1e3, 1e3);
      const double out = m.forward(w, g.uniform(-5.0, 5.0));
      CHECK(out >= a.i_min);
      CHECK(out <= a.i_max);
    }
  }
}

TEST_CASE("property: rows have fixed width and windows slide by one") {
  Gen g(8);
  for (int n = 0; n < 10; ++n) {
    const int n_w = g.integer(1, 8);
    EpisodeSpec spec = sample_episode_spec(g.rng());
    spec.n_steps = g.integer(1, 15);
    spec.rest_steps = n_w + g.integer(0, 4);
    EpisodeOptions opt;
    opt.n_w = n_w;
    EpisodeResult r = run_episode(spec, expert_policy(), opt);
    CHECK(r.rows.row_width() == static_cast<std::size_t>(3 * (n_w + 1) + 2));
    CHECK(r.rows.size() == static_cast<std::size_t>(spec.n_steps + spec.rest_steps - n_w));
    for (std::size_t i = 1; i < r.rows.size(); ++i) {
      auto a = r.rows.row(i - 1).window, b = r.rows.row(i).window;
      CHECK(std::equal(a.begin() + 3, a.end(), b.begin()));
    }
  }
}
