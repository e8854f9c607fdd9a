#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "obml/snr_estimator.hpp"

using namespace obml;

TEST_CASE("backprop gradients match central finite differences") {
  RngStream rng(111, 0);
  for (int net = 0; net < 3; ++net) {
    const std::vector<std::size_t> dims{8, 10, 6, 1};
    MlpModel model = MlpModel::init(dims, rng);
    std::vector<double> x(8);
    for (auto& v : x) v = rng.next_gaussian();
    const double target = 3.7;
    const MlpGradients g = backprop(model, x, target);
    const double eps = 1e-5;
    double max_rel = 0.0;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
      for (std::size_t r = 0; r < model.weights[l].rows(); ++r) {
        for (std::size_t c = 0; c < model.weights[l].cols(); ++c) {
          const double keep = model.weights[l](r, c);
          model.weights[l](r, c) = keep + eps;
          const double up = model.forward(x) - target;
          model.weights[l](r, c) = keep - eps;
          const double dn = model.forward(x) - target;
          model.weights[l](r, c) = keep;
          const double fd = (0.5 * up * up - 0.5 * dn * dn) / (2.0 * eps);
          const double an = g.weights[l](r, c);
          const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
          max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
        }
      }
      for (std::size_t r = 0; r < model.biases[l].size(); ++r) {
        const double keep = model.biases[l][r];
        model.biases[l][r] = keep + eps;
        const double up = model.forward(x) - target;
        model.biases[l][r] = keep - eps;
        const double dn = model.forward(x) - target;
        model.biases[l][r] = keep;
        const double fd = (0.5 * up * up - 0.5 * dn * dn) / (2.0 * eps);
        const double an = g.biases[l][r];
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
        max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
      }
    }
    CHECK(max_rel <= 1e-4);
  }
}

TEST_CASE("training converges on a constant-label dataset") {
  RngStream rng(113, 0);
  SnrDataset data;
  data.features = Matrix(120, 4);
  data.labels_db.assign(120, 7.5);
  for (std::size_t r = 0; r < 120; ++r) {
    for (std::size_t c = 0; c < 4; ++c) data.features(r, c) = rng.next_gaussian();
  }
  SnrTrainOptions opts;
  opts.epochs = 300;
  opts.batch_size = 16;
  opts.learning_rate = 2e-2;
  opts.lr_decay = 0.995;
  opts.validation_fraction = 0.0;
  const MlpModel model = train_snr_estimator(data, {8}, opts);
  for (std::size_t r = 0; r < 10; ++r) {
    CHECK(std::fabs(model.forward(data.features.row(r)) - 7.5) < 0.1);
  }
}

TEST_CASE("training is reproducible for a fixed seed") {
  RngStream rng(117, 0);
  SnrScenario sc;
  sc.num_users = 2;
  sc.num_antennas = 4;
  sc.m_order = 4;
  sc.snr_grid_db = {0.0, 10.0};
  sc.window = 8;
  RngStream data_rng(118, 0);
  const SnrDataset data = build_snr_dataset(sc, 60, data_rng);
  SnrTrainOptions opts;
  opts.epochs = 5;
  const MlpModel a = train_snr_estimator(data, {16, 8}, opts);
  const MlpModel b = train_snr_estimator(data, {16, 8}, opts);
  for (std::size_t r = 0; r < data.features.rows(); ++r) {
    CHECK(a.forward(data.features.row(r)) == b.forward(data.features.row(r)));
  }
  (void)rng;
}

TEST_CASE("dataset shapes and label balance") {
  SnrScenario sc;
  sc.num_users = 2;
  sc.num_antennas = 6;
  sc.m_order = 4;
  sc.snr_grid_db = {0.0, 10.0, 20.0};
  sc.window = 4;
  RngStream rng(119, 0);
  const SnrDataset data = build_snr_dataset(sc, 50, rng);
  CHECK(data.features.rows() == 150);
  CHECK(data.features.cols() == 12);
  std::size_t at10 = 0;
  for (double l : data.labels_db) at10 += (l == 10.0);
  CHECK(at10 == 50);
}

TEST_CASE("estimator beats the trivial mean predictor on held-out data") {
  SnrScenario sc;
  sc.num_users = 2;
  sc.num_antennas = 8;
  sc.m_order = 4;
  sc.snr_grid_db = {0.0, 5.0, 10.0, 15.0, 20.0};
  sc.window = 16;
  RngStream rng(121, 0);
  const SnrDataset data = build_snr_dataset(sc, 150, rng);
  SnrTrainOptions opts;
  opts.epochs = 30;
  SnrTrainReport report;
  const MlpModel model = train_snr_estimator(data, {32, 16}, opts, &report);
  (void)model;
  CHECK(report.validation_rmse < report.label_std);
}

TEST_CASE("estimate_snr window handling") {
  RngStream rng(123, 0);
  MlpModel model = MlpModel::init({6, 8, 1}, rng);
  model.feature_mode = SnrFeatureMode::raw;
  Observation y;
  y.signs = {1, -1, 1, 1, -1, 1};
  std::vector<Observation> window{y, y, y};
  const double single = estimate_snr(std::vector<Observation>{y}, model);
  CHECK(estimate_snr(window, model) == doctest::Approx(single).epsilon(1e-12));
  model.feature_mode = SnrFeatureMode::window_mean;
  CHECK(estimate_snr(window, model) == doctest::Approx(single).epsilon(1e-12));
  Observation bad;
  bad.signs = {1, -1};
  CHECK_THROWS_AS(estimate_snr(std::vector<Observation>{bad}, model), std::invalid_argument);
  CHECK_THROWS_AS(estimate_snr(std::vector<Observation>{}, model), std::invalid_argument);
}

TEST_CASE("model serialization round trip") {
  RngStream rng(127, 0);
  MlpModel model = MlpModel::init({4, 6, 1}, rng);
  model.feature_mode = SnrFeatureMode::window_mean;
  model.window = 9;
  model.save("mlp_roundtrip.tmp");
  const MlpModel loaded = MlpModel::load("mlp_roundtrip.tmp");
  CHECK(loaded.feature_mode == SnrFeatureMode::window_mean);
  CHECK(loaded.window == 9);
  std::vector<double> x{0.1, -0.4, 0.9, 0.3};
  CHECK(loaded.forward(x) == model.forward(x));
  std::remove("mlp_roundtrip.tmp");
}

TEST_CASE("divergent training reports an error") {
  RngStream rng(131, 0);
  SnrDataset data;
  data.features = Matrix(64, 4);
  data.labels_db.assign(64, 5.0);
  for (std::size_t r = 0; r < 64; ++r) {
    for (std::size_t c = 0; c < 4; ++c) data.features(r, c) = 10.0 * rng.next_gaussian();
  }
  SnrTrainOptions opts;
  opts.epochs = 60;
  opts.learning_rate = 1e6;  // guaranteed blow-up
  opts.validation_fraction = 0.0;
  CHECK_THROWS_AS(train_snr_estimator(data, {16}, opts), std::runtime_error);
}
