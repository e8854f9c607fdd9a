#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "obml/detectors.hpp"
#include "obml/likelihood.hpp"
#include "obml/signal_model.hpp"

namespace obml {

struct PolarCode {
  std::size_t block_length = 0;    // eta, power of two
  std::size_t message_length = 0;  // kappa
  std::size_t list_size = 8;
  std::vector<std::uint32_t> frozen_set;   // sorted u-domain indices, size eta - kappa
  std::vector<std::uint8_t> frozen_mask;   // derived, size eta

  void rebuild_mask();
  void validate() const;
};

// Frozen set from Gaussian-approximation density evolution at design_snr_db
// (Es/N0). Deterministic for fixed arguments.
PolarCode polar_construct(std::size_t block_length, std::size_t message_length,
                          double design_snr_db, std::size_t list_size = 8);

// Message bits placed on non-frozen positions (ascending index), zeros on
// frozen ones, transformed by the Arikan kernel in natural order.
std::vector<std::uint8_t> polar_encode(std::span<const std::uint8_t> message,
                                       const PolarCode& code);

// Successive-cancellation list decoding. LLR sign convention: positive favors
// bit 0. Returns the message of the lowest-metric surviving path (no CRC).
std::vector<std::uint8_t> scl_decode(std::span<const double> llrs, const PolarCode& code);

// Textual frozen-set files (eta, kappa header plus index list).
void save_frozen_set(const PolarCode& code, const std::string& path);
PolarCode load_frozen_set(const std::string& path, std::size_t list_size = 8);

// For each user u and bit position l, the candidate index sets S^u_{l,b} that
// partition {0..K-1} by the value of bit l of user u's symbol label. Computed
// once per configuration.
class BitSubsets {
 public:
  BitSubsets() = default;

  std::size_t num_users() const { return num_users_; }
  int bits_per_symbol() const { return bits_per_symbol_; }
  std::size_t count() const { return count_; }

  int bit(std::size_t user, int pos, std::size_t k) const {
    return bits_[(user * bits_per_symbol_ + pos) * count_ + k];
  }
  const std::vector<std::uint32_t>& set(std::size_t user, int pos, int b) const {
    return sets_[(user * bits_per_symbol_ + pos) * 2 + b];
  }

 private:
  friend BitSubsets build_bit_subsets(const SymbolTable& symbols);

  std::size_t num_users_ = 0;
  int bits_per_symbol_ = 0;
  std::size_t count_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<std::vector<std::uint32_t>> sets_;
};

BitSubsets build_bit_subsets(const SymbolTable& symbols);

// Per-(user, bit position) LLRs of one observation, evaluated with
// log-sum-exp over per-candidate log-likelihood sums. Positive favors bit 0.
// The observation at slot t carries code bits (t-1)q+1..tq of every user.
Matrix compute_llr(const Observation& y, const LikelihoodTable& table,
                   const BitSubsets& subsets);

// Same computation from precomputed per-candidate scores (one scorer reused
// across the data phase).
Matrix compute_llr_from_scores(std::span<const double> scores, const BitSubsets& subsets);

// Coherence-block frame layout: N_c = N_t + N_d slots, N_t >= K N_tr pilots,
// N_d = D * (eta/q) data slots.
struct FrameConfig {
  std::size_t n_c = 0;
  std::size_t n_t = 0;
  std::size_t n_d = 0;
  std::size_t d_subframes = 0;
  std::size_t n_d_sub = 0;  // eta / q

  void validate() const;
};

FrameConfig make_frame_config(const SymbolTable& symbols, const PolarCode& code,
                              std::size_t n_tr, std::size_t d_subframes);

// Encodes one message per user and maps each user's q consecutive code bits
// onto one M-QAM symbol per slot; returns the eta/q real symbol vectors
// (slots x 2Nu).
Matrix assemble_frame(const std::vector<std::vector<std::uint8_t>>& messages,
                      const PolarCode& code, const SymbolTable& symbols);

// Mapping stage of assemble_frame, reusable when codewords are already known.
Matrix map_codewords_to_slots(const std::vector<std::vector<std::uint8_t>>& codewords,
                              const SymbolTable& symbols);

}  // namespace obml
