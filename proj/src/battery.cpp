#include "dcharge/battery.hpp"

#include <cmath>
#include <string>

#include "dcharge/errors.hpp"

namespace dcharge {

namespace {

double polyval(const std::vector<double>& coeffs, double x) {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
  return acc;
}

double polyder(const std::vector<double>& coeffs, double x) {
  double acc = 0.0;
  for (std::size_t k = coeffs.size(); k-- > 1;) acc = acc * x + static_cast<double>(k) * coeffs[k];
  return acc;
}

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("battery parameters: ") + what);
}

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw ModelError(std::string("non-finite ") + what);
}

struct ThermalRate {
  double core;
  double surf;
};

ThermalRate thermal_rate(double t_core, double t_surf, double heat, const BatteryParams& p) {
  const double core_to_surf = (t_core - t_surf) / p.r_core_surf;
  const double surf_to_env = (t_surf - p.t_env) / p.r_surf_env;
  return {(heat - core_to_surf) / p.c_core, (core_to_surf - surf_to_env) / p.c_surf};
}

}  // namespace

void BatteryParams::validate() const {
  require(std::isfinite(capacity_ah) && capacity_ah > 0.0, "capacity_ah must be > 0");
  require(std::isfinite(r_sei_ohm) && r_sei_ohm >= 0.0, "r_sei_ohm must be >= 0");
  require(std::isfinite(c_core) && c_core > 0.0, "c_core must be > 0");
  require(std::isfinite(c_surf) && c_surf > 0.0, "c_surf must be > 0");
  require(std::isfinite(r_core_surf) && r_core_surf > 0.0, "r_core_surf must be > 0");
  require(std::isfinite(r_surf_env) && r_surf_env > 0.0, "r_surf_env must be > 0");
  require(std::isfinite(t_env) && t_env > 0.0, "t_env must be > 0");
  require(!ocv_p_coeffs.empty() && ocv_p_coeffs.size() <= 6, "ocv_p_coeffs needs 1..6 coefficients");
  require(!ocv_n_coeffs.empty() && ocv_n_coeffs.size() <= 6, "ocv_n_coeffs needs 1..6 coefficients");
  require(std::isfinite(eta_gain_p) && std::isfinite(eta_gain_n), "overpotential gains must be finite");
  require(std::isfinite(eta_current_scale) && eta_current_scale > 0.0,
          "eta_current_scale must be > 0");
  // dOCV/dsoc sampled densely on [0, 1].
  constexpr int kSamples = 2000;
  for (int k = 0; k <= kSamples; ++k) {
    const double s = static_cast<double>(k) / kSamples;
    const double slope = polyder(ocv_p_coeffs, s) - polyder(ocv_n_coeffs, s);
    require(slope > 0.0, "open-circuit voltage must be strictly increasing in soc");
  }
}

double cathode_potential(double soc, const BatteryParams& params) {
  return polyval(params.ocv_p_coeffs, soc);
}

double anode_potential(double soc, const BatteryParams& params) {
  return polyval(params.ocv_n_coeffs, soc);
}

double open_circuit_voltage(double soc, const BatteryParams& params) {
  return cathode_potential(soc, params) - anode_potential(soc, params);
}

double net_overpotential(double current, const BatteryParams& params) {
  const double shape = std::asinh(current / params.eta_current_scale);
  return params.eta_gain_p * shape - params.eta_gain_n * shape;
}

double terminal_voltage(const BatteryState& state, const BatteryParams& params, double current) {
  const double v = open_circuit_voltage(state.soc, params) + net_overpotential(current, params) +
                   params.r_sei_ohm * current;
  check_finite(v, "terminal voltage (check battery parameters)");
  return v;
}

double heat_generation(const BatteryState& state, const BatteryParams& params, double current) {
  const double v = terminal_voltage(state, params, current);
  const double q = std::abs(current * (v - cathode_potential(state.soc, params) +
                                       anode_potential(state.soc, params)));
  check_finite(q, "heat generation");
  return q;
}

BatteryState step(const BatteryState& state, const BatteryParams& params, double current,
                  double dt, SocLimit limit) {
  if (!(dt > 0.0)) throw ModelError("step: dt must be > 0");
  if (!std::isfinite(current)) throw ModelError("step: non-finite current");

  const double heat = heat_generation(state, params, current);

  BatteryState next = state;
  next.last_current = current;
  next.soc_clamped = false;
  next.soc = state.soc + current * dt / (3600.0 * params.capacity_ah);
  if (limit == SocLimit::clamp) {
    if (next.soc < 0.0) {
      next.soc = 0.0;
      next.soc_clamped = true;
    } else if (next.soc > 1.0) {
      next.soc = 1.0;
      next.soc_clamped = true;
    }
  }

  const double h = dt / kThermalSubsteps;
  double tc = state.t_core;
  double ts = state.t_surf;
  for (int k = 0; k < kThermalSubsteps; ++k) {
    const ThermalRate k1 = thermal_rate(tc, ts, heat, params);
    const ThermalRate k2 = thermal_rate(tc + 0.5 * h * k1.core, ts + 0.5 * h * k1.surf, heat, params);
    const ThermalRate k3 = thermal_rate(tc + 0.5 * h * k2.core, ts + 0.5 * h * k2.surf, heat, params);
    const ThermalRate k4 = thermal_rate(tc + h * k3.core, ts + h * k3.surf, heat, params);
    tc += h / 6.0 * (k1.core + 2.0 * k2.core + 2.0 * k3.core + k4.core);
    ts += h / 6.0 * (k1.surf + 2.0 * k2.surf + 2.0 * k3.surf + k4.surf);
  }
  check_finite(tc, "core temperature");
  check_finite(ts, "surface temperature");
  next.t_core = tc;
  next.t_surf = ts;
  return next;
}

Observation observe(const BatteryState& state, const BatteryParams& params, double current,
                    const NoiseSpec& noise, std::mt19937_64& rng) {
  if (noise.sigma_v < 0.0 || noise.sigma_t < 0.0 || noise.sigma_i < 0.0)
    throw ConfigError("observe: noise standard deviations must be >= 0");
  Observation obs{terminal_voltage(state, params, current), state.t_surf, current};
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Draw all three channels unconditionally so the stream position does not
  // depend on which deviations are zero.
  const double ev = gauss(rng);
  const double et = gauss(rng);
  const double ei = gauss(rng);
  obs.voltage += noise.sigma_v * ev;
  obs.t_surf += noise.sigma_t * et;
  obs.current += noise.sigma_i * ei;
  return obs;
}

}  // namespace dcharge
