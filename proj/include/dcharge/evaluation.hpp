#pragma once

// Closed-loop comparison of learned policies against the expert: imitation
// error at the visited true states, constraint violations, soc tracking, the
// single showcase scenario, and the expert-vs-policy timing sweep.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcharge/dataset.hpp"
#include "dcharge/expert.hpp"
#include "dcharge/policy.hpp"

namespace dcharge {

struct HistogramBin {
  double lo = 0.0, hi = 0.0;
  std::size_t count = 0;
};

struct ErrorStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double variance = 0.0;
  std::vector<HistogramBin> histogram;
};

// Exceedance statistics over violating steps only.
struct ViolationStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
};

ViolationStats violation_stats(const std::vector<double>& exceedances);
ErrorStats error_stats(const std::vector<double>& errors, double bin_width = 0.5, double range = 20.0);

struct PolicyEvaluation {
  std::string name;
  std::size_t steps = 0;
  ErrorStats current_error;  // policy minus expert, A
  ViolationStats temp_core;  // K above t_max
  ViolationStats temp_surf;
  ViolationStats voltage;    // V above v_max
  std::vector<double> terminal_soc_error;  // |soc - soc_ref| per episode
  // Raw per-step logs; conditional statistics are recomputable from these.
  std::vector<double> errors;
  std::vector<double> temp_core_exceedances;
  std::vector<double> voltage_exceedances;
};

struct EvalSetup {
  SamplingConfig sampling;
  ExpertConfig expert;
  int n_w = 20;
  int jobs = 1;
};

struct NamedPolicy {
  std::string name;
  const PolicyModel* model = nullptr;  // nullptr: the expert itself
};

struct EvalReport {
  std::uint64_t seed = 0;
  int episodes = 0;
  std::vector<PolicyEvaluation> policies;
};

// Every policy runs the same n_episodes randomized specs (derived from seed).
// Throws ConfigError when a model's window or current bounds disagree with the
// setup.
EvalReport evaluate_policies(const std::vector<NamedPolicy>& policies, const EvalSetup& setup,
                             int n_episodes, std::uint64_t seed);

std::string eval_report_to_json(const EvalReport& report, bool include_raw = false);
void write_histogram_csv(const std::filesystem::path& path, const ErrorStats& stats);

// 25% -> 90% charge, 302.5 K at both nodes, R_sei = 0.0165 ohm, C = 6.75 Ah,
// 400 control steps after the rest prefix.
EpisodeSpec showcase_scenario(const BatteryParams& base = {});

struct ScenarioTrace {
  EpisodeResult policy;
  EpisodeResult expert;
};

// Runs the scenario under `policy` (nullptr: expert) and under the expert.
ScenarioTrace single_scenario_trace(const PolicyModel* policy, const EpisodeSpec& scenario,
                                    const EvalSetup& setup);

// Columns: step,time_s,soc,t_core,t_surf,voltage,current
void write_trace_csv(const std::filesystem::path& path, const EpisodeResult& episode, double ts);

struct TimingRow {
  std::string method;  // "expert" or "policy"
  int horizon = 0;
  std::size_t samples = 0;
  double mean_s = 0.0;
  double stddev_s = 0.0;
  double median_s = 0.0;
};

// Per-call wall clock for the expert at each horizon and for the policy
// forward pass on the same random states (warm-up calls discarded).
std::vector<TimingRow> bench_timing(const std::vector<int>& horizons, const PolicyModel& policy,
                                    int n_states, std::uint64_t seed, const EvalSetup& setup,
                                    int warmup = 3);

std::string timing_to_json(const std::vector<TimingRow>& rows);
void write_timing_csv(const std::filesystem::path& path, const std::vector<TimingRow>& rows);

}  // namespace dcharge
