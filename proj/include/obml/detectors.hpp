#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "obml/likelihood.hpp"
#include "obml/signal_model.hpp"

namespace obml {

struct DetectionResult {
  std::size_t k_star = 0;
  double log_likelihood = 0.0;
  std::vector<cplx> user_symbols;
  bool valid = true;  // false when the detector could not decide (counts as an error)
};

// Log-domain argmax engine over per-port +/-1 log-probability tables. Scores
// are score_k(y) = sum_i log P_{k,i}^{(y_i)}; ties break to the lowest index.
// Built once per channel block and reused across observations.
class LogLikelihoodScorer {
 public:
  LogLikelihoodScorer() = default;

  static LogLikelihoodScorer from_table(const LikelihoodTable& table);
  // Exact CSI-aware probabilities: log Phi(+/- psi_{k,i}) with
  // psi_{k,i} = sqrt(2 rho / N0) h_i^T s_k.
  static LogLikelihoodScorer from_csi(const RealChannel& h, const LinkParams& params,
                                      const SymbolTable& symbols);

  std::size_t count() const { return diff_.rows(); }
  std::size_t ports() const { return diff_.cols(); }

  void scores(const Observation& y, std::span<double> out) const;
  std::size_t best(const Observation& y, double* best_score = nullptr) const;

 private:
  Matrix diff_;               // log p_plus - log p_minus
  std::vector<double> base_;  // sum_i log p_minus per candidate
};

// Correlation detector for the unquantized benchmark:
// k* = argmin_k || r - sqrt(rho) H^T s_k ||^2, precomputed per block.
class UnquantizedMlDetector {
 public:
  UnquantizedMlDetector(const RealChannel& h, const LinkParams& params,
                        const SymbolTable& symbols);
  std::size_t best(std::span<const double> r) const;

 private:
  Matrix v_;                    // K x 2Nr, rows H^T s_k
  std::vector<double> energy_;  // rho ||H^T s_k||^2
  double amp_;                  // sqrt(rho)
};

// One-bit zero-forcing: x_tilde = pinv(H^T) y, then per-user nearest
// constellation point. Construction throws std::invalid_argument when H^T is
// rank deficient; detect() then cannot be called.
class ZfDetector {
 public:
  ZfDetector(const RealChannel& h, const LinkParams& params, const SymbolTable& symbols);
  std::size_t best(const Observation& y) const;
  // x_tilde = pinv(H^T) input, length 2Nu.
  std::vector<double> equalize(std::span<const double> input) const;
  static bool full_rank(const RealChannel& h);

 private:
  Matrix pinv_;  // 2Nu x 2Nr
  const SymbolTable* symbols_;
  std::size_t num_users_;
};

DetectionResult ml_detect_csi(const Observation& y, const RealChannel& h,
                              const LinkParams& params, const SymbolTable& symbols);

// table must be finalized; symbols (when given) fill the per-user symbols of
// the result.
DetectionResult ml_detect_learned(const Observation& y, const LikelihoodTable& table,
                                  const SymbolTable* symbols = nullptr);

DetectionResult zf_detect(const Observation& y, const RealChannel& h, const LinkParams& params,
                          const SymbolTable& symbols);

DetectionResult ml_detect_unquantized(std::span<const double> r, const RealChannel& h,
                                      const LinkParams& params, const SymbolTable& symbols);

}  // namespace obml
