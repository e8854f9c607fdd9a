#include "obml/snr_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "obml/numerics.hpp"

namespace obml {

namespace {

// Forward pass keeping pre-activation outputs for backprop.
double forward_trace(const MlpModel& m, std::span<const double> input,
                     std::vector<std::vector<double>>* activations) {
  std::vector<double> cur(input.begin(), input.end());
  if (activations) {
    activations->clear();
    activations->push_back(cur);
  }
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const Matrix& w = m.weights[l];
    const auto& b = m.biases[l];
    std::vector<double> next(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
      const double* row = w.row(r).data();
      double acc = b[r];
      for (std::size_t c = 0; c < w.cols(); ++c) acc += row[c] * cur[c];
      next[r] = acc;
    }
    const bool last = (l + 1 == m.weights.size());
    if (!last) {
      for (auto& v : next) v = v > 0.0 ? v : 0.0;  // ReLU
    }
    cur = std::move(next);
    if (activations) activations->push_back(cur);
  }
  return cur[0];
}

}  // namespace

double MlpModel::forward(std::span<const double> input) const {
  if (input.size() != input_width()) {
    throw std::invalid_argument("MlpModel::forward: input width mismatch");
  }
  return forward_trace(*this, input, nullptr);
}

MlpModel MlpModel::init(const std::vector<std::size_t>& layer_dims, RngStream& rng) {
  if (layer_dims.size() < 2) throw std::invalid_argument("MlpModel::init: need at least two dims");
  if (layer_dims.back() != 1) throw std::invalid_argument("MlpModel::init: output width must be 1");
  MlpModel m;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t in = layer_dims[l];
    const std::size_t out = layer_dims[l + 1];
    Matrix w(out, in);
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (std::size_t r = 0; r < out; ++r) {
      for (std::size_t c = 0; c < in; ++c) w(r, c) = scale * rng.next_gaussian();
    }
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(out, 0.0);
  }
  return m;
}

MlpGradients backprop(const MlpModel& model, std::span<const double> input, double target) {
  std::vector<std::vector<double>> acts;
  const double out = forward_trace(model, input, &acts);

  MlpGradients g;
  g.weights.reserve(model.weights.size());
  g.biases.reserve(model.weights.size());
  for (const auto& w : model.weights) {
    g.weights.emplace_back(w.rows(), w.cols());
    g.biases.emplace_back(w.rows(), 0.0);
  }

  // d(0.5 (out - target)^2) / d out
  std::vector<double> delta{out - target};
  for (std::size_t l = model.weights.size(); l-- > 0;) {
    const auto& below = acts[l];  // input to layer l (post-activation)
    for (std::size_t r = 0; r < g.weights[l].rows(); ++r) {
      g.biases[l][r] = delta[r];
      double* row = g.weights[l].row(r).data();
      for (std::size_t c = 0; c < g.weights[l].cols(); ++c) row[c] = delta[r] * below[c];
    }
    if (l == 0) break;
    std::vector<double> next(model.weights[l].cols(), 0.0);
    for (std::size_t r = 0; r < model.weights[l].rows(); ++r) {
      const double* row = model.weights[l].row(r).data();
      for (std::size_t c = 0; c < next.size(); ++c) next[c] += row[c] * delta[r];
    }
    // ReLU gate of layer l-1's output
    for (std::size_t c = 0; c < next.size(); ++c) {
      if (acts[l][c] <= 0.0) next[c] = 0.0;
    }
    delta = std::move(next);
  }
  return g;
}

SnrDataset build_snr_dataset(const SnrScenario& scenario, std::size_t samples_per_point,
                             RngStream& rng) {
  if (scenario.snr_grid_db.empty()) {
    throw std::invalid_argument("build_snr_dataset: empty SNR grid");
  }
  if (scenario.mode == SnrFeatureMode::window_mean && scenario.window == 0) {
    throw std::invalid_argument("build_snr_dataset: window must be positive");
  }
  const SymbolTable symbols = build_symbol_table(scenario.m_order, scenario.num_users);
  const std::size_t ports = 2 * scenario.num_antennas;
  const std::size_t n = scenario.snr_grid_db.size() * samples_per_point;
  SnrDataset data;
  data.features = Matrix(n, ports);
  data.labels_db.resize(n);
  data.mode = scenario.mode;
  data.window = scenario.mode == SnrFeatureMode::window_mean ? scenario.window : 1;

  std::size_t row = 0;
  for (double snr_db : scenario.snr_grid_db) {
    const LinkParams params = LinkParams::from_snr_db(snr_db);
    for (std::size_t s = 0; s < samples_per_point; ++s) {
      const RealChannel h = lift_channel(
          gen_rayleigh_channel(scenario.num_users, scenario.num_antennas, rng));
      const std::size_t k = rng.next_u64() % symbols.count();
      const std::size_t reps = data.window;
      std::vector<double> acc(ports, 0.0);
      for (std::size_t t = 0; t < reps; ++t) {
        const auto r = transmit(h, symbols.real_vector(k), params, rng);
        const Observation y = one_bit_quantize(r);
        for (std::size_t i = 0; i < ports; ++i) acc[i] += static_cast<double>(y.signs[i]);
      }
      for (std::size_t i = 0; i < ports; ++i) {
        data.features(row, i) = acc[i] / static_cast<double>(reps);
      }
      data.labels_db[row] = snr_db;
      ++row;
    }
  }
  return data;
}

MlpModel train_snr_estimator(const SnrDataset& data, const std::vector<std::size_t>& hidden,
                             const SnrTrainOptions& opts, SnrTrainReport* report) {
  const std::size_t n = data.labels_db.size();
  if (n == 0) throw std::invalid_argument("train_snr_estimator: empty dataset");
  const std::size_t width = data.features.cols();

  std::vector<std::size_t> dims;
  dims.push_back(width);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);

  RngStream rng(opts.seed, 0xd1);
  MlpModel model = MlpModel::init(dims, rng);
  model.feature_mode = data.mode;
  model.window = data.window;

  // Deterministic shuffled split: the tail fraction validates.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next_u64() % i;
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t n_val = static_cast<std::size_t>(opts.validation_fraction * n);
  const std::size_t n_train = n - n_val;
  if (n_train == 0) throw std::invalid_argument("train_snr_estimator: no training samples");

  MlpGradients vel;
  for (const auto& w : model.weights) {
    vel.weights.emplace_back(w.rows(), w.cols());
    vel.biases.emplace_back(w.rows(), 0.0);
  }

  double lr = opts.learning_rate;
  std::vector<std::size_t> idx(order.begin(), order.begin() + n_train);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = n_train; i > 1; --i) {
      const std::size_t j = rng.next_u64() % i;
      std::swap(idx[i - 1], idx[j]);
    }
    double sq_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += opts.batch_size) {
      const std::size_t stop = std::min(start + opts.batch_size, n_train);
      MlpGradients batch;
      for (const auto& w : model.weights) {
        batch.weights.emplace_back(w.rows(), w.cols());
        batch.biases.emplace_back(w.rows(), 0.0);
      }
      for (std::size_t s = start; s < stop; ++s) {
        const auto row = data.features.row(idx[s]);
        const double target = data.labels_db[idx[s]];
        const double pred = model.forward(row);
        sq_sum += (pred - target) * (pred - target);
        const MlpGradients g = backprop(model, row, target);
        for (std::size_t l = 0; l < g.weights.size(); ++l) {
          const double* src = g.weights[l].data();
          double* dst = batch.weights[l].data();
          for (std::size_t e = 0; e < g.weights[l].values().size(); ++e) dst[e] += src[e];
          for (std::size_t e = 0; e < g.biases[l].size(); ++e) batch.biases[l][e] += g.biases[l][e];
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < model.weights.size(); ++l) {
        double* v = vel.weights[l].data();
        const double* gw = batch.weights[l].data();
        double* w = model.weights[l].data();
        for (std::size_t e = 0; e < model.weights[l].values().size(); ++e) {
          v[e] = opts.momentum * v[e] - lr * gw[e] * inv;
          w[e] += v[e];
        }
        for (std::size_t e = 0; e < model.biases[l].size(); ++e) {
          vel.biases[l][e] = opts.momentum * vel.biases[l][e] - lr * batch.biases[l][e] * inv;
          model.biases[l][e] += vel.biases[l][e];
        }
      }
    }
    const double rmse = std::sqrt(sq_sum / static_cast<double>(n_train));
    if (!std::isfinite(rmse)) {
      throw std::runtime_error("train_snr_estimator: loss diverged at epoch " +
                               std::to_string(epoch));
    }
    if (report) report->epoch_rmse.push_back(rmse);
    lr *= opts.lr_decay;
  }

  if (report) {
    double train_sq = 0.0;
    for (std::size_t s = 0; s < n_train; ++s) {
      const double d = model.forward(data.features.row(order[s])) - data.labels_db[order[s]];
      train_sq += d * d;
    }
    report->train_rmse = std::sqrt(train_sq / static_cast<double>(n_train));
    double mean = 0.0;
    for (double v : data.labels_db) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : data.labels_db) var += (v - mean) * (v - mean);
    report->label_std = std::sqrt(var / static_cast<double>(n));
    if (n_val > 0) {
      double val_sq = 0.0;
      for (std::size_t s = n_train; s < n; ++s) {
        const double d = model.forward(data.features.row(order[s])) - data.labels_db[order[s]];
        val_sq += d * d;
      }
      report->validation_rmse = std::sqrt(val_sq / static_cast<double>(n_val));
    }
  }
  return model;
}

double estimate_snr(std::span<const Observation> window, const MlpModel& model) {
  if (window.empty()) throw std::invalid_argument("estimate_snr: empty window");
  const std::size_t ports = model.input_width();
  for (const auto& y : window) {
    if (y.size() != ports) throw std::invalid_argument("estimate_snr: observation width mismatch");
  }
  if (model.feature_mode == SnrFeatureMode::window_mean) {
    std::vector<double> mean(ports, 0.0);
    for (const auto& y : window) {
      for (std::size_t i = 0; i < ports; ++i) mean[i] += static_cast<double>(y.signs[i]);
    }
    for (auto& v : mean) v /= static_cast<double>(window.size());
    return model.forward(mean);
  }
  double acc = 0.0;
  std::vector<double> feat(ports);
  for (const auto& y : window) {
    for (std::size_t i = 0; i < ports; ++i) feat[i] = static_cast<double>(y.signs[i]);
    acc += model.forward(feat);
  }
  return acc / static_cast<double>(window.size());
}

void MlpModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("MlpModel::save: cannot open " + path);
  out << "obml-mlp v1\n";
  out << static_cast<int>(feature_mode) << ' ' << window << ' ' << weights.size() << '\n';
  out.precision(17);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out << weights[l].rows() << ' ' << weights[l].cols() << '\n';
    for (std::size_t r = 0; r < weights[l].rows(); ++r) {
      const auto row = weights[l].row(r);
      for (std::size_t c = 0; c < row.size(); ++c) out << row[c] << (c + 1 < row.size() ? ' ' : '\n');
    }
    for (std::size_t r = 0; r < biases[l].size(); ++r) {
      out << biases[l][r] << (r + 1 < biases[l].size() ? ' ' : '\n');
    }
  }
  if (!out) throw std::runtime_error("MlpModel::save: write failed for " + path);
}

MlpModel MlpModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("MlpModel::load: cannot open " + path);
  std::string tag, version;
  in >> tag >> version;
  if (tag != "obml-mlp" || version != "v1") {
    throw std::runtime_error("MlpModel::load: unrecognized header in " + path);
  }
  int mode = 0;
  std::size_t window = 1, layers = 0;
  in >> mode >> window >> layers;
  MlpModel m;
  m.feature_mode = static_cast<SnrFeatureMode>(mode);
  m.window = window;
  for (std::size_t l = 0; l < layers; ++l) {
    std::size_t rows = 0, cols = 0;
    in >> rows >> cols;
    Matrix w(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) in >> w(r, c);
    }
    std::vector<double> b(rows);
    for (auto& v : b) in >> v;
    if (!in) throw std::runtime_error("MlpModel::load: truncated file " + path);
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  return m;
}

}  // namespace obml
