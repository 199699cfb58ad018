#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dcharge {

// Invalid or inconsistent configuration (bad JSON, out-of-range parameters).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model evaluation produced a non-finite value.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or window dimensions do not match the model architecture.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exhaustive search would exceed its evaluation budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A failure inside one simulated episode; the message names the episode.
class EpisodeError : public std::runtime_error {
 public:
  EpisodeError(std::int64_t episode_id, const std::string& what)
      : std::runtime_error("episode " + std::to_string(episode_id) + ": " + what),
        episode_id_(episode_id) {}
  std::int64_t episode_id() const { return episode_id_; }

 private:
  std::int64_t episode_id_;
};

// A pipeline stage failed; artifacts of completed stages remain on disk.
class StageError : public std::runtime_error {
 public:
  StageError(int iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

}  // namespace dcharge
