#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "obml/coding.hpp"
#include "obml/snr_estimator.hpp"

namespace obml {

enum class SnrModelMode : std::uint8_t { perfect = 0, estimated = 1 };

// Detector selection token: ml_csi, ml_inf, zf, naive, adl or adl:<ns>.
struct DetectorSpec {
  std::string token;
  bool is_adl = false;
  std::size_t n_s = 1;
  std::string row_id;  // identifier used in result rows
};

struct SimConfig {
  std::size_t nu = 4;
  std::size_t nr = 32;
  int m_order = 4;
  std::vector<double> snr_grid_db;

  std::size_t n_tr = 45;
  std::size_t n_s = 1;  // default split factor for the bare "adl" token
  double sigma2_init = 0.5;
  double delta = 1.0 / 3.0;

  std::vector<std::string> detectors{"ml_csi"};

  std::uint64_t min_error_events = 200;
  std::uint64_t max_trials = 1000000;
  std::size_t data_per_block = 1000;  // uncoded data vectors per coherence block

  bool coding = false;
  std::size_t eta = 128;
  std::size_t kappa = 64;
  std::size_t list_size = 8;
  std::size_t frames_per_block = 25;  // D subframes per coherence block
  double design_snr_db = 0.0;
  std::string frozen_file;  // optional pinned polar construction

  SnrModelMode snr_model = SnrModelMode::perfect;
  std::string snr_model_path;
  std::size_t est_window = 32;

  // SNR estimator training (train-snr subcommand)
  std::vector<double> est_snr_grid_db;  // defaults to snr_grid_db
  std::size_t est_samples_per_snr = 400;
  std::string est_features = "window_mean";  // or "raw"
  std::vector<std::size_t> est_hidden{64, 32};
  std::size_t est_epochs = 40;
  std::size_t est_batch = 32;
  double est_lr = 3e-3;
  double est_momentum = 0.9;
  double est_lr_decay = 0.97;
  double est_val_fraction = 0.1;

  std::size_t channel_draws = 100;  // blocks for the undertrained sweep

  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const;
  std::vector<DetectorSpec> parse_detectors() const;

  static SimConfig from_file(const std::string& path);
  static SimConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct SweepRow {
  double snr_db = 0.0;
  std::string detector;
  std::string metric;  // ser, ser_user, fer, undertrained_mean
  double value = 0.0;
  std::uint64_t num = 0;
  std::uint64_t den = 0;
  std::uint64_t seed = 0;

  bool operator==(const SweepRow&) const = default;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  bool operator==(const SweepResult&) const = default;
};

SweepResult run_ser_sweep(const SimConfig& cfg);
SweepResult run_fer_sweep(const SimConfig& cfg);
SweepResult run_undertrained_sweep(const SimConfig& cfg);

// Offline SNR estimator training per the est_* config fields.
MlpModel train_snr_model(const SimConfig& cfg, SnrTrainReport* report = nullptr);

// Header snr_db,detector,metric,value,num,den,seed; rows ordered by
// (snr asc, detector, metric); numeric fields round-trip exactly.
void emit_csv(const SweepResult& result, const std::string& path);
SweepResult parse_csv(const std::string& path);

// Shortest decimal form that parses back to exactly the same double.
std::string format_double_exact(double v);

}  // namespace obml
