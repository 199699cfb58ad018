#pragma once

// Electro-thermal battery simulator: closed-form state-of-charge integration,
// open-circuit-voltage + asinh overpotential voltage model, and a two-node
// (core/surface) lumped thermal model integrated with RK4.

#include <cstdint>
#include <random>
#include <vector>

namespace dcharge {

struct BatteryParams {
  double capacity_ah = 6.75;
  double r_sei_ohm = 0.0165;
  double c_core = 100.0;       // J/K
  double c_surf = 10.0;        // J/K
  double r_core_surf = 2.5;    // K/W
  double r_surf_env = 6.0;     // K/W
  double t_env = 298.15;       // K
  // Polynomial coefficients in ascending powers of soc.
  std::vector<double> ocv_p_coeffs{3.25, 1.85, -2.4, 1.55};
  std::vector<double> ocv_n_coeffs{0.25, -0.15};
  double eta_gain_p = 0.03;
  double eta_gain_n = -0.02;
  double eta_current_scale = 5.0;  // A

  // Throws ConfigError when a physical invariant does not hold, including a
  // non-increasing open-circuit voltage on [0, 1].
  void validate() const;
};

struct BatteryState {
  double soc = 0.0;
  double t_core = 298.15;
  double t_surf = 298.15;
  double last_current = 0.0;
  // Set by step() when the integrated soc left [0, 1] and was clamped.
  bool soc_clamped = false;
};

struct NoiseSpec {
  double sigma_v = 0.0;  // V
  double sigma_t = 0.0;  // K
  double sigma_i = 0.0;  // A
};

struct Observation {
  double voltage = 0.0;
  double t_surf = 0.0;
  double current = 0.0;
};

enum class SocLimit { clamp, free };

inline constexpr int kThermalSubsteps = 10;

double cathode_potential(double soc, const BatteryParams& params);
double anode_potential(double soc, const BatteryParams& params);
double open_circuit_voltage(double soc, const BatteryParams& params);
// eta_p(I) - eta_n(I); odd in I and independent of soc.
double net_overpotential(double current, const BatteryParams& params);

double terminal_voltage(const BatteryState& state, const BatteryParams& params, double current);
double heat_generation(const BatteryState& state, const BatteryParams& params, double current);

// Advances the state by dt seconds under a constant current. soc integrates in
// closed form; temperatures use kThermalSubsteps RK4 substeps with heat held at
// its start-of-step value. With SocLimit::free the soc is left unclamped, which
// the predictive controller uses so its soc bounds stay observable.
BatteryState step(const BatteryState& state, const BatteryParams& params, double current,
                  double dt, SocLimit limit = SocLimit::clamp);

// Measurement (V, T_s, I) with independent Gaussian noise on each channel.
Observation observe(const BatteryState& state, const BatteryParams& params, double current,
                    const NoiseSpec& noise, std::mt19937_64& rng);

}  // namespace dcharge
