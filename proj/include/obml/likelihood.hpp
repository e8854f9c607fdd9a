#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "obml/matrix.hpp"
#include "obml/signal_model.hpp"

namespace obml {

// Floor applied to under-trained entries: per (k, sign view),
// p_min = min(min nonzero entry / 10, 1 / (10 N_tr)); rows with no usable
// entries fall back to 1 / (10 N_tr) globally.
enum class FloorRule : std::uint8_t { scaled_min_nonzero = 0 };

// Learned per-candidate, per-port sign probabilities P^(+1) (K x 2Nr) with
// P^(-1) = 1 - P^(+1). Tables start raw (entries may be exactly 0 or 1);
// finalize_floor() produces a finalized table with entries strictly inside
// (0,1) and cached logarithms for log-domain ML evaluation.
class LikelihoodTable {
 public:
  LikelihoodTable() = default;
  LikelihoodTable(std::size_t count, std::size_t ports, std::size_t n_tr,
                  FloorRule rule = FloorRule::scaled_min_nonzero);

  std::size_t count() const { return p_plus_.rows(); }   // K
  std::size_t ports() const { return p_plus_.cols(); }   // 2Nr
  std::size_t training_length() const { return n_tr_; }  // N_tr
  FloorRule floor_rule() const { return rule_; }
  bool finalized() const { return finalized_; }

  double p_plus(std::size_t k, std::size_t i) const { return p_plus_(k, i); }
  double p_minus(std::size_t k, std::size_t i) const { return 1.0 - p_plus_(k, i); }
  void set_p_plus(std::size_t k, std::size_t i, double p);
  std::span<const double> p_plus_row(std::size_t k) const { return p_plus_.row(k); }

  // Finalized tables only; throws std::logic_error otherwise.
  std::span<const double> log_p_plus_row(std::size_t k) const;
  std::span<const double> log_p_minus_row(std::size_t k) const;

  // Versioned textual serialization (row-major P^(+1) with a K, 2Nr, N_tr,
  // floor-rule header).
  void save(const std::string& path) const;
  static LikelihoodTable load(const std::string& path);

 private:
  friend LikelihoodTable finalize_floor(LikelihoodTable table, struct DitherTrace* trace);

  void build_log_cache();

  Matrix p_plus_;
  Matrix log_p_plus_;
  Matrix log_p_minus_;
  std::size_t n_tr_ = 0;
  FloorRule rule_ = FloorRule::scaled_min_nonzero;
  bool finalized_ = false;
};

// Training schedule for the dither-and-learning family. n_s = 1 with delta = 0
// is plain fixed-dither learning; naive learning does not use this config.
struct TrainConfig {
  std::size_t n_tr = 45;       // pilots per symbol vector
  std::size_t n_s = 1;         // sub-blocks (split factor)
  double sigma2_init = 0.5;    // initial dithering variance sigma^2
  double delta = 1.0 / 3.0;    // variance increment on a sign-constant sub-block
  FloorRule floor_rule = FloorRule::scaled_min_nonzero;
  bool record_sigma_path = false;  // keep full per-sub-block sigma^2 trajectories

  std::size_t n_tr_sub() const { return n_tr / n_s; }
  void validate() const;
};

// Mean denoised effective outputs psi_hat over sub-blocks, K x 2Nr.
struct EffectiveOutputs {
  Matrix psi_hat;
};

// Training diagnostics: dithering variance trajectories and the per-candidate
// under-trained counts (ports whose every sub-block came back sign-constant).
struct DitherTrace {
  std::vector<std::uint32_t> undertrained_per_k;
  Matrix final_sigma2;                      // K x 2Nr
  std::vector<Matrix> sigma2_path;          // per k, (n_s + 1) x 2Nr when recorded
  std::vector<std::uint32_t> fallback_rows;  // k indices floored by the global fallback
};

// Supplies one dithered pilot observation for candidate k under the given
// per-port dithering variances; called N_tr times per candidate in schedule
// order (k = 0..K-1, sub-blocks contiguous).
using DitherPilotSource =
    std::function<Observation(std::size_t k, std::span<const double> sigma2)>;

struct AdlResult {
  LikelihoodTable table;  // finalized
  EffectiveOutputs outputs;
  DitherTrace trace;
};

// Fraction of entries equal to +1. Throws std::domain_error on empty input.
double empirical_sign_prob(std::span<const std::int8_t> signs);

// Counting estimator over undithered pilot groups; group k holds the N_tr
// observations triggered by s_k. The result is raw (not finalized).
LikelihoodTable naive_learn(const std::vector<std::vector<Observation>>& pilot_groups,
                            std::size_t n_tr);

// psi_hat = sqrt(1 + sigma2_i / n0) * Phi^{-1}(p_dithered). The caller clamps
// saturated probabilities first; p in {0,1} throws std::domain_error.
double denoise(double p_dithered, double sigma2_i, double n0);

// Adaptive dither-and-learning over a channel-in-the-loop pilot source.
// params supplies the noise power assumed by the denoising step (perfect or
// estimated); the source itself embeds the true link.
AdlResult adl_train(const DitherPilotSource& source, std::size_t count, std::size_t ports,
                    const TrainConfig& cfg, const LinkParams& params);

// Replaces under-trained entries per the floor rule and finalizes the table.
// Rows fixed by the global fallback are appended to trace->fallback_rows.
LikelihoodTable finalize_floor(LikelihoodTable table, DitherTrace* trace = nullptr);

// Per-candidate count of ports with p in {0,1}; raw tables only.
std::vector<std::uint32_t> count_undertrained(const LikelihoodTable& table);

}  // namespace obml
