#pragma once

// Episode generation, observation windows, and the aggregated imitation
// dataset. A row holds the last n_w + 1 measurement triples (V, T_s, I), the
// episode's soc reference, and the expert current at the true state.
//
// The triple recorded at step k is (V, T_s) measured at t_k together with the
// current flowing at that instant, i.e. the action applied over the previous
// interval. The action chosen at t_k is never part of its own window.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dcharge/battery.hpp"
#include "dcharge/expert.hpp"

namespace dcharge {

struct SamplingConfig {
  double soc0_min = 0.0, soc0_max = 1.0;
  double temp_min = 298.15, temp_max = 313.15;
  double soc_ref_min = 0.7, soc_ref_max = 1.0;
  double capacity_min = 5.5, capacity_max = 8.0;
  double r_sei_min = 0.014, r_sei_max = 0.019;
  // Draw one initial temperature for both nodes instead of two.
  bool couple_temperatures = false;
  int n_steps = 200;
  int rest_steps = 30;
  double ts = 10.0;
  BatteryParams base;

  void validate() const;
};

struct EpisodeSpec {
  int n_steps = 200;
  int rest_steps = 30;
  double ts = 10.0;
  double soc0 = 0.0;
  double t_core0 = 298.15;
  double t_surf0 = 298.15;
  double soc_ref = 0.9;
  BatteryParams params;
  std::uint64_t seed = 0;
};

// Per-episode seed derived from a master seed.
constexpr std::uint64_t episode_seed(std::uint64_t master, std::uint64_t episode_index) {
  return master ^ episode_index;
}

EpisodeSpec sample_episode_spec(std::uint64_t seed, const SamplingConfig& cfg = {});

struct DatasetRow {
  std::vector<double> window;
  double soc_ref = 0.0;
  double label_current = 0.0;
};

struct DatasetRowView {
  std::span<const double> window;
  double soc_ref;
  double label_current;
};

// Rows generated by one episode.
struct EpisodeOrigin {
  int iteration = 0;
  std::int64_t episode_id = 0;
  std::string policy;  // e.g. "expert", "mixed(beta=0.25)"
  std::size_t first_row = 0;
  std::size_t rows = 0;
};

class Dataset {
 public:
  explicit Dataset(int n_w = 20);

  int n_w() const { return n_w_; }
  std::size_t window_size() const { return 3 * static_cast<std::size_t>(n_w_ + 1); }
  std::size_t row_width() const { return window_size() + 2; }
  std::size_t size() const { return values_.size() / row_width(); }
  bool empty() const { return values_.empty(); }

  // Opens a provenance segment; subsequent rows belong to it.
  void begin_episode(int iteration, std::int64_t episode_id, std::string policy);
  void append(std::span<const double> window, double soc_ref, double label_current);
  void append(const DatasetRow& row) { append(row.window, row.soc_ref, row.label_current); }

  DatasetRowView row(std::size_t i) const;
  std::span<const double> raw_row(std::size_t i) const;
  std::span<const double> values() const { return values_; }
  const std::vector<EpisodeOrigin>& provenance() const { return origins_; }
  const EpisodeOrigin& origin_of(std::size_t row) const;

  // Appends every row and provenance segment of `other` (same n_w required).
  void extend(const Dataset& other);

  // <base>.bin (little-endian float64, row-major) + <base>.meta.json.
  void save(const std::filesystem::path& base) const;
  static Dataset load(const std::filesystem::path& base);
  void export_csv(const std::filesystem::path& path) const;
  static std::vector<std::string> csv_columns(int n_w);

 private:
  int n_w_;
  std::vector<double> values_;
  std::vector<EpisodeOrigin> origins_;
};

// D_prev followed by D_new; throws ShapeError on window-size mismatch.
Dataset aggregate(const Dataset& d_prev, const Dataset& d_new);

struct StepContext {
  const BatteryState& state;
  const BatteryParams& params;
  double soc_ref;
  std::span<const double> window;
  double expert_current;
  int step;
  std::mt19937_64& rng;
};

struct PolicyChoice {
  double current = 0.0;
  bool from_expert = true;
};

using ActingPolicy = std::function<PolicyChoice(const StepContext&)>;

// The expert acting on its own label.
ActingPolicy expert_policy();

struct TrajectoryStep {
  int step = 0;
  bool rest = false;
  double soc = 0.0, t_core = 0.0, t_surf = 0.0;  // state at t_k
  double current = 0.0;                          // applied over [t_k, t_k+1)
  double voltage = 0.0;  // terminal voltage at t_k under `current`
  double v_peak = 0.0;  // max terminal voltage at the interval ends under `current`
  double soc_next = 0.0, t_core_next = 0.0, t_surf_next = 0.0;
  double expert_current = 0.0;  // NaN when the expert was not queried
  bool from_expert = true;
  bool labeled = false;
  bool safety_override = false;
};

struct EpisodeOptions {
  int n_w = 20;
  ExpertConfig expert;
  NoiseSpec observation_noise;  // clean by default
  bool label_rest = true;       // label rest steps that already have a full window
  int iteration = 0;
  std::int64_t episode_id = 0;
  std::string policy_tag = "expert";
};

struct EpisodeResult {
  EpisodeSpec spec;
  std::vector<TrajectoryStep> trajectory;
  BatteryState final_state;
  Dataset rows;
};

// Rest prefix of zero current, then n_steps of the acting policy. Every step
// from n_w onward (rest or not, see label_rest) is labelled by the expert at
// the true state. Errors are rethrown with the episode id attached.
EpisodeResult run_episode(const EpisodeSpec& spec, const ActingPolicy& acting,
                          const EpisodeOptions& options);

// Runs many episodes (in parallel when jobs > 1) and concatenates their rows
// in spec order. Episode i uses episode_ids[i].
struct EpisodeBatch {
  Dataset rows;
  std::vector<EpisodeResult> episodes;
};
EpisodeBatch run_episodes(const std::vector<EpisodeSpec>& specs,
                          const std::vector<std::int64_t>& episode_ids, const ActingPolicy& acting,
                          const EpisodeOptions& options, int jobs, bool keep_rows_per_episode = false);

}  // namespace dcharge
