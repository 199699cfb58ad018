#pragma once

// Measurement-only charging policy: stacked LSTM over the observation window,
// soc reference appended to the last hidden state, a ReLU dense stack, and a
// tanh head rescaled to the current bounds. All parameters live in one flat
// vector so the optimiser, checkpoints and the gradient check share a layout.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "dcharge/battery.hpp"
#include "dcharge/dataset.hpp"

namespace dcharge {

struct Architecture {
  int n_w = 20;
  std::vector<int> lstm_sizes{128, 64, 32, 16};
  std::vector<int> dense_sizes{100, 100, 50, 10};
  double i_min = -10.0;
  double i_max = 10.0;

  static constexpr int kInputChannels = 3;  // V, T_s, I

  std::size_t parameter_count() const;
  // Hidden sizes multiplied by `factor`, rounded up.
  Architecture scaled(double factor) const;
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

// Per-channel standardisation for V, T_s, I (shared over time steps) and soc_ref.
struct Standardizer {
  enum Channel { voltage = 0, temperature = 1, current = 2, soc_ref = 3 };
  static constexpr double kStdFloor = 1e-8;

  std::array<double, 4> mean{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> stddev{1.0, 1.0, 1.0, 1.0};

  static Standardizer fit(const Dataset& data);
  double apply(int channel, double x) const { return (x - mean[channel]) / stddev[channel]; }
  double invert(int channel, double z) const { return z * stddev[channel] + mean[channel]; }
};

// Standardised minibatch: steps[t] is 3 x B (oldest first), soc_ref and
// labels are 1 x B (labels in amperes).
struct Batch {
  std::vector<Eigen::MatrixXd> steps;
  Eigen::RowVectorXd soc_ref;
  Eigen::RowVectorXd labels;
  Eigen::Index size() const { return soc_ref.size(); }
};

// Feature noise (raw units) is added to V and T_s before standardisation;
// labels are never perturbed.
Batch make_batch(const Dataset& data, std::span<const std::size_t> rows, const Standardizer& prep,
                 const NoiseSpec& noise, std::mt19937_64* rng);

class PolicyModel {
 public:
  // Xavier-uniform weights, zero biases, forget-gate biases at 1.
  explicit PolicyModel(Architecture arch = {}, std::uint64_t init_seed = 0);

  const Architecture& architecture() const { return arch_; }
  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Standardizer& preprocess() { return prep_; }
  const Standardizer& preprocess() const { return prep_; }
  NoiseSpec& noise_spec() { return noise_; }
  const NoiseSpec& noise_spec() const { return noise_; }

  // Current for one raw window of (n_w + 1) triples. Throws ShapeError.
  double forward(std::span<const double> window, double soc_ref) const;
  Eigen::RowVectorXd forward(const Batch& batch) const;

  // Mean squared error in A^2; writes dLoss/dparams when grad != nullptr.
  double loss(const Batch& batch, Eigen::VectorXd* grad = nullptr) const;

  void save(const std::filesystem::path& path) const;
  static PolicyModel load(const std::filesystem::path& path);
  // Throws ConfigError when the stored architecture differs from `expected`.
  static PolicyModel load(const std::filesystem::path& path, const Architecture& expected);

 private:
  struct Workspace;
  double run(const Batch& batch, Workspace& ws, Eigen::VectorXd* grad) const;

  Architecture arch_;
  Eigen::VectorXd params_;
  Standardizer prep_;
  NoiseSpec noise_{0.020, 1.0, 0.0};
};

struct TrainConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 256;
  int epochs = 100;
  int patience = 10;  // epochs without validation improvement before stopping; 0 disables
  double validation_fraction = 0.05;
  std::uint64_t seed = 1;
  // When false the model's existing standardisation statistics are kept.
  bool fit_preprocess = true;
  // Gaussian feature noise drawn afresh for every presentation; stored in
  // the trained model's noise_spec.
  NoiseSpec noise{0.020, 1.0, 0.0};

  void validate() const;
};

struct TrainResult {
  PolicyModel model;
  std::vector<double> train_loss;       // mean minibatch loss per epoch
  std::vector<double> validation_loss;  // empty when the split leaves no validation rows
  int best_epoch = 0;
};

// Minibatch Adam on the MSE between the bounded output and the expert label.
// The parameters with the best validation loss are returned. Throws
// TrainingError on a non-finite loss.
TrainResult train(PolicyModel model, const Dataset& data, const TrainConfig& cfg);

struct GradCheckResult {
  double max_relative_error = 0.0;
  double median_relative_error = 0.0;
  double max_absolute_error_small = 0.0;  // over parameters whose gradient is ~0
  std::size_t parameters_checked = 0;
  std::size_t small_gradients = 0;
  double noise_floor = 0.0;  // eps * |loss| / h, the round-off level of the differences
};

// Analytic gradient vs central finite differences over every parameter.
// Gradients below max(small_threshold, 1e4 * noise_floor) in magnitude are
// compared by absolute error instead.
GradCheckResult gradient_check(const PolicyModel& model, const Batch& batch, double h = 1e-5,
                               double small_threshold = 1e-6);

}  // namespace dcharge
