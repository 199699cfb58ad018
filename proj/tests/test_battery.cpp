#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "dcharge/battery.hpp"
#include "dcharge/errors.hpp"

using namespace dcharge;

namespace {

// Exact solution of the linear two-node network for constant heat q.
Eigen::Vector2d thermal_exact(const BatteryParams& p, double tc, double ts, double q, double t) {
  Eigen::Matrix2d a;
  a << -1.0 / (p.c_core * p.r_core_surf), 1.0 / (p.c_core * p.r_core_surf),
      1.0 / (p.c_surf * p.r_core_surf), -(1.0 / p.r_core_surf + 1.0 / p.r_surf_env) / p.c_surf;
  const double ts_inf = p.t_env + q * p.r_surf_env;
  Eigen::Vector2d x_inf(ts_inf + q * p.r_core_surf, ts_inf);
  Eigen::Vector2d x0(tc, ts);
  Eigen::Matrix2d e = (a * t).exp();
  return x_inf + e * (x0 - x_inf);
}

}  // namespace

TEST_CASE("open-circuit voltage of the default surrogate") {
  BatteryParams p;
  // 3.25 + 1.85/2 - 2.4/4 + 1.55/8 minus 0.25 - 0.15/2
  CHECK(open_circuit_voltage(0.5, p) == doctest::Approx(3.59375).epsilon(1e-15));
  CHECK(open_circuit_voltage(0.0, p) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(open_circuit_voltage(1.0, p) == doctest::Approx(4.15).epsilon(1e-15));
}

TEST_CASE("terminal voltage at zero current is the open-circuit voltage") {
  BatteryParams p;
  for (double soc : {0.0, 0.1, 0.5, 0.77, 1.0}) {
    BatteryState s{soc, 300.0, 300.0, 0.0, false};
    CHECK(terminal_voltage(s, p, 0.0) == open_circuit_voltage(soc, p));
  }
}

TEST_CASE("overpotential and ohmic drop are odd in current") {
  BatteryParams p;
  BatteryState s{0.42, 300.0, 300.0, 0.0, false};
  const double ocv = open_circuit_voltage(0.42, p);
  for (double i : {0.1, 1.0, 3.7, 10.0}) {
    CHECK(terminal_voltage(s, p, i) - ocv == doctest::Approx(-(terminal_voltage(s, p, -i) - ocv)).epsilon(1e-13));
  }
}

TEST_CASE("terminal voltage at soc 0.5, 10 A, R_sei 0.019") {
  BatteryParams p;
  p.r_sei_ohm = 0.019;
  BatteryState s{0.5, 300.0, 300.0, 0.0, false};
  // 3.59375 + 0.05 * asinh(2) + 0.19
  CHECK(terminal_voltage(s, p, 10.0) == doctest::Approx(3.8559317737589405).epsilon(1e-13));
}

TEST_CASE("heat generation") {
  BatteryParams p;
  p.r_sei_ohm = 0.019;
  BatteryState s{0.5, 300.0, 300.0, 0.0, false};
  CHECK(heat_generation(s, p, 0.0) == 0.0);
  // 10 * (0.05 * asinh(2) + 0.19)
  CHECK(heat_generation(s, p, 10.0) == doctest::Approx(2.6218177375894052).epsilon(1e-13));
  CHECK(heat_generation(s, p, -10.0) >= 0.0);
}

TEST_CASE("soc step matches closed-form integration") {
  BatteryParams p;
  p.capacity_ah = 6.75;
  BatteryState s{0.25, 300.0, 300.0, 0.0, false};
  BatteryState n = step(s, p, 10.0, 10.0);
  CHECK(n.soc - 0.25 == doctest::Approx(4.1152e-3).epsilon(1e-4));
  CHECK(n.last_current == 10.0);
  CHECK_FALSE(n.soc_clamped);
}

TEST_CASE("soc clamps at the physical range and raises the flag") {
  BatteryParams p;
  BatteryState s{0.999, 300.0, 300.0, 0.0, false};
  BatteryState n = step(s, p, 10.0, 10.0);
  CHECK(n.soc == 1.0);
  CHECK(n.soc_clamped);
  BatteryState lo = step(BatteryState{0.001, 300.0, 300.0, 0.0, false}, p, -10.0, 10.0);
  CHECK(lo.soc == 0.0);
  CHECK(lo.soc_clamped);
  BatteryState fr = step(s, p, 10.0, 10.0, SocLimit::free);
  CHECK(fr.soc > 1.0);
  CHECK_FALSE(fr.soc_clamped);
}

TEST_CASE("zero input at ambient temperature is a fixed point") {
  BatteryParams p;
  BatteryState s{0.37, p.t_env, p.t_env, 4.0, false};
  BatteryState n = s;
  for (int k = 0; k < 100; ++k) n = step(n, p, 0.0, 10.0);
  CHECK(n.soc == s.soc);
  CHECK(n.t_core == s.t_core);
  CHECK(n.t_surf == s.t_surf);
  CHECK(n.last_current == 0.0);
}

TEST_CASE("thermal steady state under constant heat") {
  BatteryParams p;
  // Heat depends only on current, so a constant current pins it.
  const double i = 6.0;
  BatteryState s{0.9, p.t_env, p.t_env, 0.0, false};
  const double q = heat_generation(s, p, i);
  for (int k = 0; k < 3000; ++k) s = step(s, p, i, 10.0);
  const double ts_inf = p.t_env + q * p.r_surf_env;
  CHECK(std::abs(s.t_surf - ts_inf) < 0.01);
  CHECK(std::abs(s.t_core - (s.t_surf + q * p.r_core_surf)) < 0.01);
}

TEST_CASE("RK4 thermal step agrees with the matrix exponential") {
  BatteryParams p;
  BatteryState s{0.3, 305.0, 301.0, 0.0, false};
  const double i = 10.0;
  const double q = heat_generation(s, p, i);
  BatteryState n = s;
  for (int k = 1; k <= 50; ++k) {
    n = step(n, p, i, 10.0);
    Eigen::Vector2d x = thermal_exact(p, s.t_core, s.t_surf, q, 10.0 * k);
    CHECK(std::abs(n.t_core - x(0)) < 1e-6);
    CHECK(std::abs(n.t_surf - x(1)) < 1e-6);
  }
}

TEST_CASE("default thermal regime reaches the core limit within one episode at 10 A") {
  BatteryParams p;
  BatteryState s{0.0, 302.5, 302.5, 0.0, false};
  int k = 0;
  while (s.t_core < 313.15 && k < 200) s = step(s, p, 10.0, 10.0, SocLimit::free), ++k;
  CHECK(k < 200);
  CHECK(k > 20);
}

TEST_CASE("observation without noise is exact") {
  BatteryParams p;
  BatteryState s{0.6, 304.0, 302.0, 0.0, false};
  std::mt19937_64 rng(3);
  Observation o = observe(s, p, 2.5, NoiseSpec{}, rng);
  CHECK(o.voltage == terminal_voltage(s, p, 2.5));
  CHECK(o.t_surf == 302.0);
  CHECK(o.current == 2.5);
}

TEST_CASE("observation noise has the configured spread") {
  BatteryParams p;
  BatteryState s{0.6, 304.0, 302.0, 0.0, false};
  std::mt19937_64 rng(11);
  NoiseSpec noise{0.020, 1.0, 0.0};
  const double v = terminal_voltage(s, p, 1.0);
  const int n = 100000;
  double sv = 0, sv2 = 0, st = 0, st2 = 0;
  for (int k = 0; k < n; ++k) {
    Observation o = observe(s, p, 1.0, noise, rng);
    sv += o.voltage - v, sv2 += (o.voltage - v) * (o.voltage - v);
    st += o.t_surf - 302.0, st2 += (o.t_surf - 302.0) * (o.t_surf - 302.0);
    CHECK(o.current == 1.0);
  }
  const double std_v = std::sqrt(sv2 / n - (sv / n) * (sv / n));
  const double std_t = std::sqrt(st2 / n - (st / n) * (st / n));
  CHECK(std::abs(std_v - 0.020) < 0.03 * 0.020);
  CHECK(std::abs(std_t - 1.0) < 0.03);
}

TEST_CASE("observation sequence is reproducible under a seed") {
  BatteryParams p;
  BatteryState s{0.6, 304.0, 302.0, 0.0, false};
  NoiseSpec noise{0.020, 1.0, 0.1};
  std::mt19937_64 a(99), b(99);
  for (int k = 0; k < 50; ++k) {
    Observation x = observe(s, p, 1.0, noise, a), y = observe(s, p, 1.0, noise, b);
    CHECK(x.voltage == y.voltage);
    CHECK(x.t_surf == y.t_surf);
    CHECK(x.current == y.current);
  }
}

TEST_CASE("negative noise is rejected") {
  BatteryParams p;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(observe(BatteryState{}, p, 0.0, NoiseSpec{-1.0, 0.0, 0.0}, rng), ConfigError);
}

TEST_CASE("parameter validation") {
  BatteryParams p;
  CHECK_NOTHROW(p.validate());
  auto bad = [](auto mutate) {
    BatteryParams q;
    mutate(q);
    CHECK_THROWS_AS(q.validate(), ConfigError);
  };
  bad([](BatteryParams& q) { q.capacity_ah = 0.0; });
  bad([](BatteryParams& q) { q.r_sei_ohm = -1e-3; });
  bad([](BatteryParams& q) { q.c_core = 0.0; });
  bad([](BatteryParams& q) { q.c_surf = -1.0; });
  bad([](BatteryParams& q) { q.r_core_surf = 0.0; });
  bad([](BatteryParams& q) { q.r_surf_env = 0.0; });
  bad([](BatteryParams& q) { q.ocv_p_coeffs = {4.0, -1.0}; });
  bad([](BatteryParams& q) { q.ocv_n_coeffs = {}; });
  bad([](BatteryParams& q) { q.ocv_p_coeffs = {1, 1, 1, 1, 1, 1, 1}; });
}

TEST_CASE("non-finite evaluation is a model error") {
  BatteryParams p;
  p.eta_current_scale = std::numeric_limits<double>::quiet_NaN();
  BatteryState s{0.5, 300.0, 300.0, 0.0, false};
  CHECK_THROWS_AS(terminal_voltage(s, p, 1.0), ModelError);
}
