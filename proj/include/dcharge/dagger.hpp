#pragma once

// DAGGER and the behavioural-cloning baseline.
//
// Iteration 0 collects D_0 with the pure expert and trains pi_0 on it. Each
// iteration i = 1..n_D rolls out the mixture (expert with probability beta_i,
// pi_{i-1} otherwise), labels every visited state with the expert, appends the
// rows to the aggregate and retrains pi_i on it. beta_i = beta0 * decay^i.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dcharge/dataset.hpp"
#include "dcharge/expert.hpp"
#include "dcharge/policy.hpp"

namespace dcharge {

struct DaggerConfig {
  int n_iterations = 15;
  double beta0 = 1.0;
  double beta_decay = 0.5;
  int episodes_initial = 500;
  int episodes_per_iter = 100;
  std::uint64_t seed = 42;
  // Continue from the previous iteration's weights instead of a fresh init.
  bool warm_start_training = false;
  // Refit standardisation on every aggregate instead of freezing it on D_0.
  bool refit_preprocess = false;
  // Stop early when the best validation loss improves by less than the
  // threshold (relative) from one iteration to the next.
  bool plateau_exit = false;
  double plateau_threshold = 1e-4;

  double beta(int iteration) const;
  // Episodes in the final aggregate.
  int total_episodes() const { return episodes_initial + n_iterations * episodes_per_iter; }
  void validate() const;
};

// Everything shared by the DAGGER and behavioural-cloning pipelines.
struct PipelineSetup {
  SamplingConfig sampling;
  ExpertConfig expert;
  Architecture architecture;
  TrainConfig train;
  int jobs = 1;
  std::filesystem::path out_dir;  // empty: keep everything in memory
  bool resume = false;
  std::function<void(const std::string&)> log;
};

// Bernoulli(beta) choice between the expert and the learner. Only the chosen
// branch is evaluated.
PolicyChoice mixed_policy_action(double beta, const std::function<double()>& expert_fn,
                                 const std::function<double()>& learner_fn, std::mt19937_64& rng);

ActingPolicy learner_policy(const PolicyModel& model);
ActingPolicy mixed_policy(double beta, const PolicyModel& learner);

struct IterationReport {
  int iteration = 0;
  double beta = 1.0;
  int episodes_new = 0;
  int episodes_total = 0;
  std::size_t rows_new = 0;
  std::size_t rows_total = 0;
  std::size_t expert_steps = 0;   // acting steps taken by the expert branch
  std::size_t learner_steps = 0;  // acting steps taken by the learner branch
  std::size_t temp_violation_steps = 0;  // core temperature above t_max
  std::size_t volt_violation_steps = 0;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = 0;
};

struct PipelineResult {
  PolicyModel model;
  Dataset dataset;
  std::vector<IterationReport> reports;
};

PipelineResult run_dagger(const DaggerConfig& cfg, const PipelineSetup& setup);

// All episodes from the pure expert (episode ids 0..episodes-1 under `seed`,
// so the first episodes coincide with DAGGER's D_0), one training run.
PipelineResult run_behavioral_cloning(int episodes, std::uint64_t seed, const PipelineSetup& setup);

// Summaries written as iterNN.report.json.
std::string report_to_json(const IterationReport& report);
IterationReport report_from_json(const std::string& text);

}  // namespace dcharge
