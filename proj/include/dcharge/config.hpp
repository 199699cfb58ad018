#pragma once

// JSON configuration. One document holds optional sections "battery",
// "expert", "episode", "policy", "train", "dagger" and "evaluation"; unknown
// keys anywhere are rejected with ConfigError.

#include <cstdint>
#include <filesystem>
#include "json.hpp"

#include "dcharge/battery.hpp"
#include "dcharge/dagger.hpp"
#include "dcharge/dataset.hpp"
#include "dcharge/expert.hpp"
#include "dcharge/policy.hpp"

namespace dcharge {

struct EvaluationConfig {
  int episodes = 100;
  std::uint64_t seed = 20240917;
};

struct RunConfig {
  BatteryParams battery;
  SamplingConfig sampling;  // sampling.base mirrors `battery`
  ExpertConfig expert;
  Architecture policy;      // current bounds mirror expert.bounds
  TrainConfig train;
  DaggerConfig dagger;
  EvaluationConfig evaluation;
  // Behavioural-cloning episodes; 0 means the DAGGER aggregate size.
  int bc_episodes = 0;

  int effective_bc_episodes() const { return bc_episodes > 0 ? bc_episodes : dagger.total_episodes(); }
  void validate() const;
};

// Battery document: capacity_ah, r_sei_ohm, c_core, c_surf, r_core_surf,
// r_surf_env and t_env are required; the surrogate coefficients are optional.
BatteryParams parse_battery_params(const nlohmann::json& doc);
ExpertConfig parse_expert_config(const nlohmann::json& doc);

RunConfig parse_run_config(const nlohmann::json& doc);
// Throws ConfigError for a missing file or malformed JSON.
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const BatteryParams& params);
nlohmann::json to_json(const RunConfig& cfg);

// Desk-scale protocol: episode counts x scale (rounded up), hidden sizes
// x min(1, 5 * scale) (rounded up), n_D = clamp(ceil(15 * scale), 5, 15).
// scale >= 1 leaves the configuration unchanged.
void apply_scale(RunConfig& cfg, double scale);

}  // namespace dcharge
