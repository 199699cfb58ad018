#include "dcharge/expert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dcharge/errors.hpp"

namespace dcharge {

namespace {

constexpr double kTieTolerance = 1e-9;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;
constexpr double kStepTolerance = 1e-10;  // A
constexpr double kOracleBudget = 1e7;

double hinge_sq(double excess) { return excess > 0.0 ? excess * excess : 0.0; }

double l1(std::span<const double> xs) {
  double acc = 0.0;
  for (double x : xs) acc += std::abs(x);
  return acc;
}

// a strictly better than b under the cost-then-effort ordering.
bool preferred(double cost_a, double l1_a, double cost_b, double l1_b) {
  if (cost_a < cost_b - kTieTolerance) return true;
  if (cost_a > cost_b + kTieTolerance) return false;
  return l1_a < l1_b;
}

// Cost of one interval starting at `state` under `current`; advances `state`.
double interval_cost(BatteryState& state, const BatteryParams& params, double soc_ref,
                     const ExpertConfig& cfg, double current) {
  const Bounds& b = cfg.bounds;
  const double v_start = terminal_voltage(state, params, current);
  state = step(state, params, current, cfg.ts, SocLimit::free);
  const double v_end = terminal_voltage(state, params, current);

  const double err = state.soc - soc_ref;
  const double stage = cfg.q_soc * err * err + cfg.r * current * current;
  const double violation = hinge_sq(b.soc_min - state.soc) + hinge_sq(state.soc - b.soc_max) +
                           hinge_sq(state.t_core - b.t_max) + hinge_sq(state.t_surf - b.t_max) +
                           hinge_sq(v_start - b.v_max) + hinge_sq(v_end - b.v_max);
  return stage + cfg.penalty_weight * violation;
}

void project(std::vector<double>& xs, const Bounds& b) {
  for (double& x : xs) x = std::clamp(x, b.i_min, b.i_max);
}

struct OracleSearch {
  const BatteryParams& params;
  double soc_ref;
  const ExpertConfig& cfg;
  std::vector<double> grid;
  std::vector<double> current;
  std::vector<double> best;
  double best_cost = std::numeric_limits<double>::infinity();
  double best_l1 = std::numeric_limits<double>::infinity();

  void descend(const BatteryState& state, int depth, double cost_so_far) {
    if (depth == cfg.horizon) {
      const double effort = l1(current);
      if (preferred(cost_so_far, effort, best_cost, best_l1)) {
        best_cost = cost_so_far;
        best_l1 = effort;
        best = current;
      }
      return;
    }
    for (double level : grid) {
      BatteryState next = state;
      const double c = interval_cost(next, params, soc_ref, cfg, level);
      current[depth] = level;
      descend(next, depth + 1, cost_so_far + c);
    }
  }
};

}  // namespace

void Bounds::validate() const {
  if (!(i_min < i_max)) throw ConfigError("bounds: i_min must be < i_max");
  if (!(soc_min < soc_max)) throw ConfigError("bounds: soc_min must be < soc_max");
  if (!(t_max > 0.0)) throw ConfigError("bounds: t_max must be > 0");
  if (!(v_max > 0.0)) throw ConfigError("bounds: v_max must be > 0");
}

void ExpertConfig::validate() const {
  bounds.validate();
  if (horizon < 1) throw ConfigError("expert: horizon must be >= 1");
  if (!(ts > 0.0)) throw ConfigError("expert: ts must be > 0");
  if (!(q_soc >= 0.0)) throw ConfigError("expert: q_soc must be >= 0");
  if (!(r >= 0.0)) throw ConfigError("expert: r must be >= 0");
  if (!(penalty_weight > 0.0)) throw ConfigError("expert: penalty_weight must be > 0");
  if (max_iterations < 1) throw ConfigError("expert: max_iterations must be >= 1");
  if (!(fd_step > 0.0)) throw ConfigError("expert: fd_step must be > 0");
  if (oracle_levels < 2) throw ConfigError("expert: oracle_levels must be >= 2");
}

double augmented_cost(const BatteryState& state, const BatteryParams& params, double soc_ref,
                      const ExpertConfig& cfg, std::span<const double> currents) {
  if (static_cast<int>(currents.size()) != cfg.horizon)
    throw ShapeError("augmented_cost: sequence length " + std::to_string(currents.size()) +
                     " != horizon " + std::to_string(cfg.horizon));
  BatteryState x = state;
  double cost = 0.0;
  for (double current : currents) cost += interval_cost(x, params, soc_ref, cfg, current);
  return cost;
}

HorizonSolution solve_horizon(const BatteryState& state, const BatteryParams& params,
                              double soc_ref, const ExpertConfig& cfg,
                              std::span<const double> warm_start) {
  const int n = cfg.horizon;
  const Bounds& b = cfg.bounds;
  const double box_width = b.i_max - b.i_min;
  auto cost_of = [&](std::span<const double> u) {
    return augmented_cost(state, params, soc_ref, cfg, u);
  };

  std::vector<double> x(n, 0.0);
  if (static_cast<int>(warm_start.size()) == n) std::copy(warm_start.begin(), warm_start.end(), x.begin());
  project(x, b);

  std::vector<double> probe(n);
  auto gradient = [&](const std::vector<double>& u, std::vector<double>& g) {
    probe = u;
    for (int k = 0; k < n; ++k) {
      probe[k] = u[k] + cfg.fd_step;
      const double up = cost_of(probe);
      probe[k] = u[k] - cfg.fd_step;
      const double down = cost_of(probe);
      probe[k] = u[k];
      g[k] = (up - down) / (2.0 * cfg.fd_step);
    }
  };

  double fx = cost_of(x);
  std::vector<double> g(n), g_new(n), trial(n);
  gradient(x, g);

  HorizonSolution out;
  out.converged = false;
  double alpha = 0.0;
  std::vector<double> s_prev, y_prev;
  int iter = 0;
  for (; iter < cfg.max_iterations; ++iter) {
    const double g_inf = std::abs(*std::max_element(
        g.begin(), g.end(), [](double a, double c) { return std::abs(a) < std::abs(c); }));
    if (g_inf == 0.0) {
      out.converged = true;
      break;
    }
    if (!s_prev.empty()) {
      const double sy = std::inner_product(s_prev.begin(), s_prev.end(), y_prev.begin(), 0.0);
      const double ss = std::inner_product(s_prev.begin(), s_prev.end(), s_prev.begin(), 0.0);
      alpha = sy > 0.0 ? ss / sy : box_width / g_inf;
    } else {
      alpha = box_width / g_inf;
    }

    bool accepted = false;
    double f_trial = fx;
    double max_move = 0.0;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      double directional = 0.0;
      max_move = 0.0;
      for (int k = 0; k < n; ++k) {
        trial[k] = std::clamp(x[k] - alpha * g[k], b.i_min, b.i_max);
        directional += g[k] * (trial[k] - x[k]);
        max_move = std::max(max_move, std::abs(trial[k] - x[k]));
      }
      if (max_move < kStepTolerance) break;
      f_trial = cost_of(trial);
      if (f_trial <= fx + kArmijo * directional) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No representable descent along the projected arc: stationary to
      // working precision.
      out.converged = true;
      break;
    }

    gradient(trial, g_new);
    s_prev.assign(n, 0.0);
    y_prev.assign(n, 0.0);
    for (int k = 0; k < n; ++k) {
      s_prev[k] = trial[k] - x[k];
      y_prev[k] = g_new[k] - g[k];
    }
    x = trial;
    fx = f_trial;
    g.swap(g_new);
    if (max_move < 1e-8) {
      out.converged = true;
      ++iter;
      break;
    }
  }
  out.iterations = iter;

  const std::vector<double> zeros(n, 0.0);
  const double f_zero = cost_of(zeros);
  if (preferred(f_zero, 0.0, fx, l1(x))) {
    x = zeros;
    fx = f_zero;
  }
  out.currents = std::move(x);
  out.cost = fx;
  return out;
}

HorizonSolution grid_oracle(const BatteryState& state, const BatteryParams& params,
                            double soc_ref, const ExpertConfig& cfg, int levels) {
  if (levels < 2) throw ConfigError("grid_oracle: levels must be >= 2");
  if (std::pow(static_cast<double>(levels), cfg.horizon) > kOracleBudget)
    throw BudgetError("grid_oracle: " + std::to_string(levels) + "^" +
                      std::to_string(cfg.horizon) + " sequences exceeds the 1e7 budget");
  const Bounds& b = cfg.bounds;
  OracleSearch search{params, soc_ref, cfg, {}, std::vector<double>(cfg.horizon, 0.0), {}};
  search.grid.resize(levels);
  const double spacing = (b.i_max - b.i_min) / (levels - 1);
  for (int k = 0; k < levels; ++k) search.grid[k] = b.i_min + k * spacing;
  search.grid.back() = b.i_max;
  search.descend(state, 0, 0.0);

  HorizonSolution out;
  out.currents = std::move(search.best);
  out.cost = search.best_cost;
  out.iterations = 1;
  return out;
}

bool outside_safe_region(const BatteryState& state, const BatteryParams& params,
                         const Bounds& bounds) {
  if (state.t_core > bounds.t_max || state.t_surf > bounds.t_max) return true;
  return open_circuit_voltage(state.soc, params) >= bounds.v_max;
}

std::span<const double> WarmStart::guess(int horizon) {
  if (static_cast<int>(shifted_.size()) != horizon) shifted_.assign(horizon, 0.0);
  return shifted_;
}

void WarmStart::remember(std::span<const double> solution) {
  shifted_.assign(solution.begin(), solution.end());
  if (shifted_.empty()) return;
  std::rotate(shifted_.begin(), shifted_.begin() + 1, shifted_.end());
  shifted_.back() = solution.back();
}

ExpertDecision expert_action(const BatteryState& state, const BatteryParams& params,
                             double soc_ref, const ExpertConfig& cfg, WarmStart* warm) {
  ExpertDecision decision;
  if (outside_safe_region(state, params, cfg.bounds)) {
    decision.current = 0.0;
    decision.safety_override = true;
    if (warm) warm->reset();
    return decision;
  }
  HorizonSolution sol;
  if (cfg.solver == SolverKind::grid_oracle) {
    sol = grid_oracle(state, params, soc_ref, cfg, cfg.oracle_levels);
  } else {
    sol = solve_horizon(state, params, soc_ref, cfg,
                        warm ? warm->guess(cfg.horizon) : std::span<const double>{});
  }
  if (warm) warm->remember(sol.currents);
  decision.current = sol.currents.front();
  decision.converged = sol.converged;
  return decision;
}

}  // namespace dcharge
