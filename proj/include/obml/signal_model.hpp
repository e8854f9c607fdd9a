#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "obml/matrix.hpp"
#include "obml/numerics.hpp"

namespace obml {

using cplx = std::complex<double>;

// Transmit power rho, noise power N0 and the SNR gamma = rho/N0. The harness
// fixes rho = 1 and sweeps N0.
struct LinkParams {
  double rho = 1.0;
  double n0 = 1.0;

  double snr_linear() const { return rho / n0; }
  double snr_db() const;
  static LinkParams from_snr_db(double snr_db, double rho = 1.0);
};

// Complex uplink channel, entry (u, i) = gain between user u and antenna i.
struct ComplexChannel {
  std::size_t num_users = 0;
  std::size_t num_antennas = 0;
  std::vector<cplx> entries;  // row-major Nu x Nr

  cplx operator()(std::size_t u, std::size_t i) const { return entries[u * num_antennas + i]; }
  cplx& operator()(std::size_t u, std::size_t i) { return entries[u * num_antennas + i]; }
};

// Real-valued lifting of the complex channel. h is the 2Nu x 2Nr matrix H with
// block structure [[Re, Im], [-Im, Re]]; column i of H is the real channel of
// port i, and H^T x stacks Re/Im of the complex product.
struct RealChannel {
  std::size_t num_users = 0;     // Nu
  std::size_t num_antennas = 0;  // Nr
  Matrix h;                      // 2Nu x 2Nr

  std::size_t real_dims() const { return 2 * num_users; }
  std::size_t real_ports() const { return 2 * num_antennas; }

  // out = H^T x with x of length 2Nu, out of length 2Nr.
  void apply_transpose(std::span<const double> x, std::span<double> out) const;
};

// Signs of the 2Nr real ports after one-bit quantization.
struct Observation {
  std::vector<std::int8_t> signs;  // each entry +1 or -1
  std::size_t size() const { return signs.size(); }
};

// Candidate symbol vectors s_k for Nu users of M-QAM, together with the
// Gray-coded bit mapping f_M. Candidate k is identified by per-user labels;
// user 0 is the most significant digit of k in base M.
class SymbolTable {
 public:
  SymbolTable() = default;

  int order() const { return m_order_; }
  int bits_per_symbol() const { return bits_per_symbol_; }  // q = log2(M)
  std::size_t num_users() const { return num_users_; }
  std::size_t count() const { return count_; }  // K = M^Nu

  // Constellation point for a q-bit label value.
  const std::vector<cplx>& constellation() const { return constellation_; }

  // Real-valued candidate vector s_k, length 2Nu: [Re x_1..Re x_Nu, Im x_1..Im x_Nu].
  std::span<const double> real_vector(std::size_t k) const { return real_vectors_.row(k); }
  const Matrix& real_vectors() const { return real_vectors_; }

  // Per-user label of candidate k.
  int label(std::size_t k, std::size_t user) const;
  std::size_t index_of_labels(std::span<const int> labels) const;

  // Bit pos (0-based, 0 = first code bit mapped) of a label.
  int label_bit(int label, int pos) const;

  // f_M: q bits (first bit = MSB of the label) to a constellation point.
  cplx map_bits(std::span<const std::uint8_t> bits) const;

  // Nearest constellation point, returned as its label.
  int nearest_label(cplx point) const;

  std::vector<cplx> user_symbols(std::size_t k) const;

 private:
  friend SymbolTable build_symbol_table(int m_order, std::size_t num_users);

  int m_order_ = 0;
  int bits_per_symbol_ = 0;
  std::size_t num_users_ = 0;
  std::size_t count_ = 0;
  std::vector<cplx> constellation_;
  Matrix real_vectors_;  // K x 2Nu
};

// i.i.d. CN(0,1) entries: real and imaginary parts each N(0, 1/2).
ComplexChannel gen_rayleigh_channel(std::size_t num_users, std::size_t num_antennas,
                                    RngStream& rng);

RealChannel lift_channel(const ComplexChannel& ch);

// M in {4, 16, 64}; throws std::invalid_argument otherwise.
SymbolTable build_symbol_table(int m_order, std::size_t num_users);

// r = sqrt(rho) H^T x + z, with z i.i.d. N(0, N0/2) per real dimension.
std::vector<double> transmit(const RealChannel& h, std::span<const double> x,
                             const LinkParams& params, RngStream& rng);

// Element-wise sign: +1 for positive entries, -1 for entries <= 0.
Observation one_bit_quantize(std::span<const double> r);

// Quantized observation of s with per-port dithering d_i ~ N(0, sigma2[i]/2)
// added on top of the thermal noise.
Observation dithered_observation(const RealChannel& h, std::span<const double> s,
                                 const LinkParams& params, std::span<const double> sigma2,
                                 RngStream& rng);

}  // namespace obml
