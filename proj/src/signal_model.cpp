#include "obml/signal_model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace obml {

namespace {

int gray_decode(int g) {
  int b = 0;
  for (; g; g >>= 1) b ^= g;
  return b;
}

}  // namespace

double LinkParams::snr_db() const { return 10.0 * std::log10(snr_linear()); }

LinkParams LinkParams::from_snr_db(double snr_db, double rho) {
  if (rho <= 0.0) throw std::invalid_argument("LinkParams: rho must be positive");
  LinkParams p;
  p.rho = rho;
  p.n0 = rho / std::pow(10.0, snr_db / 10.0);
  return p;
}

void RealChannel::apply_transpose(std::span<const double> x, std::span<double> out) const {
  const std::size_t dims = real_dims();
  const std::size_t ports = real_ports();
  if (x.size() != dims || out.size() != ports) {
    throw std::invalid_argument("RealChannel::apply_transpose: dimension mismatch");
  }
  for (std::size_t i = 0; i < ports; ++i) out[i] = 0.0;
  for (std::size_t u = 0; u < dims; ++u) {
    const double xu = x[u];
    const double* row = h.row(u).data();
    for (std::size_t i = 0; i < ports; ++i) out[i] += row[i] * xu;
  }
}

ComplexChannel gen_rayleigh_channel(std::size_t num_users, std::size_t num_antennas,
                                    RngStream& rng) {
  if (num_users == 0 || num_antennas == 0) {
    throw std::invalid_argument("gen_rayleigh_channel: dimensions must be positive");
  }
  ComplexChannel ch;
  ch.num_users = num_users;
  ch.num_antennas = num_antennas;
  ch.entries.resize(num_users * num_antennas);
  for (auto& e : ch.entries) {
    e = cplx(rng.gaussian(0.0, 0.5), rng.gaussian(0.0, 0.5));
  }
  return ch;
}

RealChannel lift_channel(const ComplexChannel& ch) {
  RealChannel out;
  out.num_users = ch.num_users;
  out.num_antennas = ch.num_antennas;
  const std::size_t nu = ch.num_users;
  const std::size_t nr = ch.num_antennas;
  out.h = Matrix(2 * nu, 2 * nr);
  for (std::size_t u = 0; u < nu; ++u) {
    for (std::size_t i = 0; i < nr; ++i) {
      const double re = ch(u, i).real();
      const double im = ch(u, i).imag();
      out.h(u, i) = re;
      out.h(u, i + nr) = im;
      out.h(u + nu, i) = -im;
      out.h(u + nu, i + nr) = re;
    }
  }
  return out;
}

int SymbolTable::label(std::size_t k, std::size_t user) const {
  std::size_t div = 1;
  for (std::size_t j = user + 1; j < num_users_; ++j) div *= m_order_;
  return static_cast<int>((k / div) % m_order_);
}

std::size_t SymbolTable::index_of_labels(std::span<const int> labels) const {
  if (labels.size() != num_users_) {
    throw std::invalid_argument("SymbolTable::index_of_labels: wrong label count");
  }
  std::size_t k = 0;
  for (std::size_t u = 0; u < num_users_; ++u) {
    k = k * m_order_ + static_cast<std::size_t>(labels[u]);
  }
  return k;
}

int SymbolTable::label_bit(int label, int pos) const {
  return (label >> (bits_per_symbol_ - 1 - pos)) & 1;
}

cplx SymbolTable::map_bits(std::span<const std::uint8_t> bits) const {
  if (bits.size() != static_cast<std::size_t>(bits_per_symbol_)) {
    throw std::invalid_argument("SymbolTable::map_bits: wrong bit count");
  }
  int label = 0;
  for (auto b : bits) label = (label << 1) | (b & 1);
  return constellation_[label];
}

int SymbolTable::nearest_label(cplx point) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int l = 0; l < m_order_; ++l) {
    const double d = std::norm(point - constellation_[l]);
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best;
}

std::vector<cplx> SymbolTable::user_symbols(std::size_t k) const {
  std::vector<cplx> out(num_users_);
  for (std::size_t u = 0; u < num_users_; ++u) out[u] = constellation_[label(k, u)];
  return out;
}

SymbolTable build_symbol_table(int m_order, std::size_t num_users) {
  if (m_order != 4 && m_order != 16 && m_order != 64) {
    throw std::invalid_argument("build_symbol_table: M must be 4, 16 or 64");
  }
  if (num_users == 0) throw std::invalid_argument("build_symbol_table: Nu must be >= 1");

  SymbolTable t;
  t.m_order_ = m_order;
  t.num_users_ = num_users;
  int q = 0;
  while ((1 << q) < m_order) ++q;
  t.bits_per_symbol_ = q;

  // Square QAM on the odd-integer grid, scaled to unit average power. Each
  // axis carries q/2 Gray-coded bits; the I bits are the leading half of the
  // label.
  const int levels = 1 << (q / 2);
  const double scale = 1.0 / std::sqrt(2.0 * (m_order - 1) / 3.0);
  t.constellation_.resize(m_order);
  for (int label = 0; label < m_order; ++label) {
    const int gi = label >> (q / 2);
    const int gq = label & (levels - 1);
    const int vi = gray_decode(gi);
    const int vq = gray_decode(gq);
    t.constellation_[label] = cplx((2 * vi - (levels - 1)) * scale, (2 * vq - (levels - 1)) * scale);
  }

  std::size_t count = 1;
  for (std::size_t u = 0; u < num_users; ++u) {
    if (count > (std::size_t(1) << 40) / m_order) {
      throw std::invalid_argument("build_symbol_table: K = M^Nu too large");
    }
    count *= m_order;
  }
  t.count_ = count;

  t.real_vectors_ = Matrix(count, 2 * num_users);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t u = 0; u < num_users; ++u) {
      const cplx c = t.constellation_[t.label(k, u)];
      t.real_vectors_(k, u) = c.real();
      t.real_vectors_(k, u + num_users) = c.imag();
    }
  }
  return t;
}

std::vector<double> transmit(const RealChannel& h, std::span<const double> x,
                             const LinkParams& params, RngStream& rng) {
  std::vector<double> r(h.real_ports());
  h.apply_transpose(x, r);
  const double amp = std::sqrt(params.rho);
  const double half_n0 = params.n0 / 2.0;
  for (auto& v : r) v = amp * v + rng.gaussian(0.0, half_n0);
  return r;
}

Observation one_bit_quantize(std::span<const double> r) {
  Observation obs;
  obs.signs.resize(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!std::isfinite(r[i])) throw std::domain_error("one_bit_quantize: non-finite input");
    obs.signs[i] = r[i] > 0.0 ? std::int8_t{1} : std::int8_t{-1};
  }
  return obs;
}

Observation dithered_observation(const RealChannel& h, std::span<const double> s,
                                 const LinkParams& params, std::span<const double> sigma2,
                                 RngStream& rng) {
  if (sigma2.size() != h.real_ports()) {
    throw std::invalid_argument("dithered_observation: sigma2 length must be 2Nr");
  }
  std::vector<double> r(h.real_ports());
  h.apply_transpose(s, r);
  const double amp = std::sqrt(params.rho);
  const double half_n0 = params.n0 / 2.0;
  Observation obs;
  obs.signs.resize(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (sigma2[i] < 0.0) throw std::domain_error("dithered_observation: negative variance");
    const double v = amp * r[i] + rng.gaussian(0.0, half_n0) + rng.gaussian(0.0, sigma2[i] / 2.0);
    obs.signs[i] = v > 0.0 ? std::int8_t{1} : std::int8_t{-1};
  }
  return obs;
}

}  // namespace obml
