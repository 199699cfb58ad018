#pragma once

// Receding-horizon charging controller with full state and parameter access.
//
// The horizon problem minimises
//   q_soc * sum_j (soc_{j+1} - soc_ref)^2 + r * sum_j I_j^2
// plus penalty_weight * sum max(0, violation)^2 for the soc, core/surface
// temperature and voltage limits. Voltage is checked under the applied current
// at both ends of every interval. Input bounds are enforced by projection.

#include <cstdint>
#include <span>
#include <vector>

#include "dcharge/battery.hpp"

namespace dcharge {

struct Bounds {
  double i_min = -10.0;
  double i_max = 10.0;
  double soc_min = 0.0;
  double soc_max = 1.0;
  double t_max = 313.15;
  double v_max = 4.2;

  void validate() const;
};

enum class SolverKind { smooth, grid_oracle };

struct ExpertConfig {
  int horizon = 4;
  double ts = 10.0;
  double q_soc = 1.0;
  double r = 1e-6;
  Bounds bounds;
  double penalty_weight = 1e4;
  SolverKind solver = SolverKind::smooth;
  int max_iterations = 200;
  double fd_step = 1e-3;   // A, central-difference step
  int oracle_levels = 21;  // grid levels per step when solver == grid_oracle

  void validate() const;
};

struct HorizonSolution {
  std::vector<double> currents;
  double cost = 0.0;  // augmented (penalised) cost
  bool converged = true;
  int iterations = 0;
};

// Augmented cost of an input sequence (length = cfg.horizon).
double augmented_cost(const BatteryState& state, const BatteryParams& params, double soc_ref,
                      const ExpertConfig& cfg, std::span<const double> currents);

// Projected gradient descent with central-difference gradients, spectral step
// initialisation and Armijo backtracking. An empty warm start means zeros. The
// result never costs more than the all-zero sequence.
HorizonSolution solve_horizon(const BatteryState& state, const BatteryParams& params,
                              double soc_ref, const ExpertConfig& cfg,
                              std::span<const double> warm_start = {});

// Exhaustive search over `levels` evenly spaced currents per step (inclusive of
// both bounds). Ties within 1e-9 go to the smallest sum |I|. Throws BudgetError
// when levels^horizon > 1e7.
HorizonSolution grid_oracle(const BatteryState& state, const BatteryParams& params,
                            double soc_ref, const ExpertConfig& cfg, int levels);

// True when the zero-current safety rule applies: a temperature is already
// above t_max, or the open-circuit voltage alone reaches v_max.
bool outside_safe_region(const BatteryState& state, const BatteryParams& params,
                         const Bounds& bounds);

struct ExpertDecision {
  double current = 0.0;
  bool converged = true;
  bool safety_override = false;
};

// Per-episode warm-start cache: the previous solution shifted by one step.
class WarmStart {
 public:
  std::span<const double> guess(int horizon);
  void remember(std::span<const double> solution);
  void reset() { shifted_.clear(); }

 private:
  std::vector<double> shifted_;
};

ExpertDecision expert_action(const BatteryState& state, const BatteryParams& params,
                             double soc_ref, const ExpertConfig& cfg, WarmStart* warm = nullptr);

}  // namespace dcharge
