#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "obml/matrix.hpp"
#include "obml/signal_model.hpp"

namespace obml {

enum class SnrFeatureMode : std::uint8_t {
  raw = 0,          // single one-bit observation fed directly
  window_mean = 1,  // per-port empirical sign mean over a pilot-style window
};

// Feedforward network with rectifier hidden layers and a scalar affine
// output, mapping 2Nr-dimensional features to an SNR estimate in dB.
struct MlpModel {
  std::vector<Matrix> weights;               // layer l: out_dim x in_dim
  std::vector<std::vector<double>> biases;   // layer l: out_dim
  SnrFeatureMode feature_mode = SnrFeatureMode::raw;
  std::size_t window = 1;  // observations per feature vector in window_mean mode

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_width() const { return weights.empty() ? 0 : weights.front().cols(); }

  double forward(std::span<const double> input) const;

  void save(const std::string& path) const;
  static MlpModel load(const std::string& path);

  static MlpModel init(const std::vector<std::size_t>& layer_dims, RngStream& rng);
};

struct SnrDataset {
  Matrix features;                // N x 2Nr
  std::vector<double> labels_db;  // true gamma in dB
  SnrFeatureMode mode = SnrFeatureMode::raw;
  std::size_t window = 1;
};

struct SnrScenario {
  std::size_t num_users = 4;
  std::size_t num_antennas = 32;
  int m_order = 4;
  std::vector<double> snr_grid_db;
  SnrFeatureMode mode = SnrFeatureMode::window_mean;
  std::size_t window = 32;  // slots of the repeated symbol vector per sample
};

// For each grid SNR, draws fresh channels and symbol vectors and extracts
// one-bit features labeled with the true SNR.
SnrDataset build_snr_dataset(const SnrScenario& scenario, std::size_t samples_per_point,
                             RngStream& rng);

struct SnrTrainOptions {
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double learning_rate = 3e-3;
  double momentum = 0.9;
  double lr_decay = 0.97;  // per epoch
  double validation_fraction = 0.1;
  std::uint64_t seed = 1;
};

struct SnrTrainReport {
  std::vector<double> epoch_rmse;
  double train_rmse = 0.0;
  double validation_rmse = 0.0;
  double label_std = 0.0;  // RMSE of the trivial mean predictor
};

// Mini-batch gradient descent on squared dB error; deterministic for a fixed
// seed. Throws std::runtime_error if the loss diverges.
MlpModel train_snr_estimator(const SnrDataset& data, const std::vector<std::size_t>& hidden,
                             const SnrTrainOptions& opts, SnrTrainReport* report = nullptr);

// Gradient of the squared error 0.5 (y - f(x))^2 with respect to all weights
// and biases; layout matches MlpModel. Exposed for gradient checking.
struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};
MlpGradients backprop(const MlpModel& model, std::span<const double> input, double target);

// Features from a window of observations. In window_mean mode the window is
// reduced to per-port means and passed through once; in raw mode each
// observation is estimated separately and the estimates averaged.
double estimate_snr(std::span<const Observation> window, const MlpModel& model);

}  // namespace obml
