#include "obml/coding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace obml {

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

// Gaussian-approximation phi(x) = 1 - E[tanh(v/2)], v ~ N(x, 2x).
double ga_phi(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 10.0) return std::exp(0.0218 - 0.4527 * std::pow(x, 0.86));
  return std::sqrt(M_PI / x) * std::exp(-x / 4.0) * (1.0 - 10.0 / (7.0 * x));
}

double ga_phi_inv(double y) {
  if (y >= 1.0) return 0.0;
  const double lo_val = ga_phi(10.0);
  if (y > lo_val) {
    return std::pow((0.0218 - std::log(y)) / 0.4527, 1.0 / 0.86);
  }
  double lo = 10.0, hi = 10.0;
  while (ga_phi(hi) > y) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ga_phi(mid) > y) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Exact check-node combination in the log-likelihood domain.
double f_combine(double a, double b) {
  const double sgn = ((a < 0.0) != (b < 0.0)) ? -1.0 : 1.0;
  const double aa = std::fabs(a);
  const double ab = std::fabs(b);
  return sgn * std::min(aa, ab) + std::log1p(std::exp(-(aa + ab))) -
         std::log1p(std::exp(-std::fabs(aa - ab)));
}

// Path bookkeeping for list decoding.
struct PathSet {
  std::size_t list_size;
  std::vector<double> metrics;
  std::vector<std::vector<std::uint8_t>> info_bits;

  explicit PathSet(std::size_t l) : list_size(l), metrics(1, 0.0), info_bits(1) {}
  std::size_t active() const { return metrics.size(); }
};

struct NodeResult {
  // hard[p] = codeword-domain partial sums of this node for path p
  std::vector<std::vector<std::uint8_t>> hard;
  // parent_map[p] = index of the entering path this one descends from
  std::vector<std::size_t> parent_map;
};

NodeResult process_node(std::size_t size, const std::uint8_t* frozen,
                        std::vector<std::vector<double>>& soft, PathSet& paths) {
  NodeResult out;
  if (size == 1) {
    const std::size_t n_in = paths.active();
    if (*frozen) {
      out.hard.resize(n_in, std::vector<std::uint8_t>(1, 0));
      out.parent_map.resize(n_in);
      for (std::size_t p = 0; p < n_in; ++p) {
        out.parent_map[p] = p;
        const double llr = soft[p][0];
        if (llr < 0.0) paths.metrics[p] -= llr;
      }
      return out;
    }
    // Fork every path on the information bit and keep the best list_size.
    struct Cand {
      double metric;
      std::size_t parent;
      std::uint8_t bit;
    };
    std::vector<Cand> cands;
    cands.reserve(2 * n_in);
    for (std::size_t p = 0; p < n_in; ++p) {
      const double llr = soft[p][0];
      const double pen = std::fabs(llr);
      cands.push_back({paths.metrics[p] + (llr < 0.0 ? pen : 0.0), p, 0});
      cands.push_back({paths.metrics[p] + (llr >= 0.0 ? pen : 0.0), p, 1});
    }
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return cands[a].metric < cands[b].metric;
    });
    const std::size_t n_out = std::min(paths.list_size, cands.size());
    std::vector<double> new_metrics(n_out);
    std::vector<std::vector<std::uint8_t>> new_info(n_out);
    out.hard.resize(n_out, std::vector<std::uint8_t>(1));
    out.parent_map.resize(n_out);
    for (std::size_t p = 0; p < n_out; ++p) {
      const Cand& c = cands[order[p]];
      new_metrics[p] = c.metric;
      new_info[p] = paths.info_bits[c.parent];
      new_info[p].push_back(c.bit);
      out.hard[p][0] = c.bit;
      out.parent_map[p] = c.parent;
    }
    paths.metrics = std::move(new_metrics);
    paths.info_bits = std::move(new_info);
    return out;
  }

  const std::size_t half = size / 2;
  const std::size_t n_in = paths.active();

  std::vector<std::vector<double>> child(n_in, std::vector<double>(half));
  for (std::size_t p = 0; p < n_in; ++p) {
    for (std::size_t j = 0; j < half; ++j) {
      child[p][j] = f_combine(soft[p][j], soft[p][j + half]);
    }
  }
  NodeResult left = process_node(half, frozen, child, paths);

  child.assign(paths.active(), std::vector<double>(half));
  for (std::size_t p = 0; p < paths.active(); ++p) {
    const auto& s = soft[left.parent_map[p]];
    for (std::size_t j = 0; j < half; ++j) {
      child[p][j] = s[j + half] + (left.hard[p][j] ? -s[j] : s[j]);
    }
  }
  NodeResult right = process_node(half, frozen + half, child, paths);

  out.hard.resize(paths.active(), std::vector<std::uint8_t>(size));
  out.parent_map.resize(paths.active());
  for (std::size_t p = 0; p < paths.active(); ++p) {
    const auto& lh = left.hard[right.parent_map[p]];
    const auto& rh = right.hard[p];
    for (std::size_t j = 0; j < half; ++j) {
      out.hard[p][j] = lh[j] ^ rh[j];
      out.hard[p][j + half] = rh[j];
    }
    out.parent_map[p] = left.parent_map[right.parent_map[p]];
  }
  return out;
}

}  // namespace

void PolarCode::rebuild_mask() {
  frozen_mask.assign(block_length, 0);
  for (auto i : frozen_set) {
    if (i >= block_length) throw std::invalid_argument("PolarCode: frozen index out of range");
    frozen_mask[i] = 1;
  }
}

void PolarCode::validate() const {
  if (!is_power_of_two(block_length)) {
    throw std::invalid_argument("PolarCode: block length must be a power of two");
  }
  if (message_length > block_length) {
    throw std::invalid_argument("PolarCode: message longer than block");
  }
  if (frozen_set.size() != block_length - message_length) {
    throw std::invalid_argument("PolarCode: frozen set size mismatch");
  }
  if (frozen_mask.size() != block_length) {
    throw std::invalid_argument("PolarCode: frozen mask not built");
  }
  if (list_size == 0) throw std::invalid_argument("PolarCode: list size must be positive");
}

PolarCode polar_construct(std::size_t block_length, std::size_t message_length,
                          double design_snr_db, std::size_t list_size) {
  if (!is_power_of_two(block_length) || message_length > block_length) {
    throw std::invalid_argument("polar_construct: invalid sizes");
  }
  // BPSK at Es/N0 = design SNR: channel LLR mean 4 * snr.
  const double m0 = 4.0 * std::pow(10.0, design_snr_db / 10.0);
  std::vector<double> mean{m0};
  while (mean.size() < block_length) {
    std::vector<double> next(2 * mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double phi = ga_phi(mean[i]);
      next[2 * i] = ga_phi_inv(phi * (2.0 - phi));  // check: 1 - (1 - phi)^2
      next[2 * i + 1] = 2.0 * mean[i];
    }
    mean = std::move(next);
  }

  std::vector<std::uint32_t> order(block_length);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return mean[a] < mean[b]; });

  PolarCode code;
  code.block_length = block_length;
  code.message_length = message_length;
  code.list_size = list_size;
  code.frozen_set.assign(order.begin(), order.begin() + (block_length - message_length));
  std::sort(code.frozen_set.begin(), code.frozen_set.end());
  code.rebuild_mask();
  return code;
}

std::vector<std::uint8_t> polar_encode(std::span<const std::uint8_t> message,
                                       const PolarCode& code) {
  code.validate();
  if (message.size() != code.message_length) {
    throw std::invalid_argument("polar_encode: message length mismatch");
  }
  std::vector<std::uint8_t> u(code.block_length, 0);
  std::size_t m = 0;
  for (std::size_t i = 0; i < code.block_length; ++i) {
    if (!code.frozen_mask[i]) u[i] = message[m++] & 1;
  }
  for (std::size_t len = 1; len < code.block_length; len <<= 1) {
    for (std::size_t i = 0; i < code.block_length; i += 2 * len) {
      for (std::size_t j = 0; j < len; ++j) u[i + j] ^= u[i + j + len];
    }
  }
  return u;
}

std::vector<std::uint8_t> scl_decode(std::span<const double> llrs, const PolarCode& code) {
  code.validate();
  if (llrs.size() != code.block_length) {
    throw std::invalid_argument("scl_decode: llr length mismatch");
  }
  for (double v : llrs) {
    if (std::isnan(v)) throw std::invalid_argument("scl_decode: NaN llr");
  }
  PathSet paths(code.list_size);
  std::vector<std::vector<double>> soft(1, std::vector<double>(llrs.begin(), llrs.end()));
  process_node(code.block_length, code.frozen_mask.data(), soft, paths);

  std::size_t best = 0;
  for (std::size_t p = 1; p < paths.active(); ++p) {
    if (paths.metrics[p] < paths.metrics[best]) best = p;
  }
  return paths.info_bits[best];
}

void save_frozen_set(const PolarCode& code, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_frozen_set: cannot open " + path);
  out << "obml-frozen-set v1\n";
  out << code.block_length << ' ' << code.message_length << '\n';
  for (std::size_t i = 0; i < code.frozen_set.size(); ++i) {
    out << code.frozen_set[i] << (i + 1 < code.frozen_set.size() ? ' ' : '\n');
  }
  if (!out) throw std::runtime_error("save_frozen_set: write failed for " + path);
}

PolarCode load_frozen_set(const std::string& path, std::size_t list_size) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_frozen_set: cannot open " + path);
  std::string tag, version;
  in >> tag >> version;
  if (tag != "obml-frozen-set" || version != "v1") {
    throw std::runtime_error("load_frozen_set: unrecognized header in " + path);
  }
  PolarCode code;
  code.list_size = list_size;
  in >> code.block_length >> code.message_length;
  code.frozen_set.resize(code.block_length - code.message_length);
  for (auto& v : code.frozen_set) in >> v;
  if (!in) throw std::runtime_error("load_frozen_set: truncated file " + path);
  std::sort(code.frozen_set.begin(), code.frozen_set.end());
  code.rebuild_mask();
  code.validate();
  return code;
}

BitSubsets build_bit_subsets(const SymbolTable& symbols) {
  BitSubsets s;
  s.num_users_ = symbols.num_users();
  s.bits_per_symbol_ = symbols.bits_per_symbol();
  s.count_ = symbols.count();
  s.bits_.resize(s.num_users_ * s.bits_per_symbol_ * s.count_);
  s.sets_.resize(s.num_users_ * s.bits_per_symbol_ * 2);
  for (std::size_t u = 0; u < s.num_users_; ++u) {
    for (int pos = 0; pos < s.bits_per_symbol_; ++pos) {
      auto& set0 = s.sets_[(u * s.bits_per_symbol_ + pos) * 2];
      auto& set1 = s.sets_[(u * s.bits_per_symbol_ + pos) * 2 + 1];
      for (std::size_t k = 0; k < s.count_; ++k) {
        const int b = symbols.label_bit(symbols.label(k, u), pos);
        s.bits_[(u * s.bits_per_symbol_ + pos) * s.count_ + k] = static_cast<std::uint8_t>(b);
        (b ? set1 : set0).push_back(static_cast<std::uint32_t>(k));
      }
    }
  }
  return s;
}

namespace {

double log_sum_exp(std::span<const double> scores, const std::vector<std::uint32_t>& idx) {
  double m = -std::numeric_limits<double>::infinity();
  for (auto k : idx) m = std::max(m, scores[k]);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (auto k : idx) acc += std::exp(scores[k] - m);
  return m + std::log(acc);
}

}  // namespace

Matrix compute_llr_from_scores(std::span<const double> scores, const BitSubsets& subsets) {
  Matrix llr(subsets.num_users(), subsets.bits_per_symbol());
  for (std::size_t u = 0; u < subsets.num_users(); ++u) {
    for (int pos = 0; pos < subsets.bits_per_symbol(); ++pos) {
      const double num = log_sum_exp(scores, subsets.set(u, pos, 0));
      const double den = log_sum_exp(scores, subsets.set(u, pos, 1));
      llr(u, pos) = num - den;
    }
  }
  return llr;
}

Matrix compute_llr(const Observation& y, const LikelihoodTable& table,
                   const BitSubsets& subsets) {
  if (subsets.count() != table.count()) {
    throw std::invalid_argument("compute_llr: subset / table size mismatch");
  }
  const auto scorer = LogLikelihoodScorer::from_table(table);
  std::vector<double> scores(table.count());
  scorer.scores(y, scores);
  return compute_llr_from_scores(scores, subsets);
}

void FrameConfig::validate() const {
  if (n_c != n_t + n_d) throw std::invalid_argument("FrameConfig: N_c must equal N_t + N_d");
  if (n_d != d_subframes * n_d_sub) {
    throw std::invalid_argument("FrameConfig: N_d must equal D * eta/q");
  }
}

FrameConfig make_frame_config(const SymbolTable& symbols, const PolarCode& code,
                              std::size_t n_tr, std::size_t d_subframes) {
  if (code.block_length % symbols.bits_per_symbol() != 0) {
    throw std::invalid_argument("make_frame_config: eta must be divisible by q");
  }
  FrameConfig fc;
  fc.n_d_sub = code.block_length / symbols.bits_per_symbol();
  fc.d_subframes = d_subframes;
  fc.n_d = d_subframes * fc.n_d_sub;
  fc.n_t = symbols.count() * n_tr;
  fc.n_c = fc.n_t + fc.n_d;
  fc.validate();
  return fc;
}

Matrix map_codewords_to_slots(const std::vector<std::vector<std::uint8_t>>& codewords,
                              const SymbolTable& symbols) {
  const std::size_t num_users = symbols.num_users();
  if (codewords.size() != num_users) {
    throw std::invalid_argument("map_codewords_to_slots: one codeword per user required");
  }
  const int q = symbols.bits_per_symbol();
  const std::size_t eta = codewords.front().size();
  if (eta % q != 0) {
    throw std::invalid_argument("map_codewords_to_slots: eta must be divisible by q");
  }
  const std::size_t slots = eta / q;
  Matrix out(slots, 2 * num_users);
  for (std::size_t u = 0; u < num_users; ++u) {
    if (codewords[u].size() != eta) {
      throw std::invalid_argument("map_codewords_to_slots: codeword length mismatch");
    }
    for (std::size_t t = 0; t < slots; ++t) {
      const cplx c = symbols.map_bits(
          std::span<const std::uint8_t>(codewords[u].data() + t * q, static_cast<std::size_t>(q)));
      out(t, u) = c.real();
      out(t, u + num_users) = c.imag();
    }
  }
  return out;
}

Matrix assemble_frame(const std::vector<std::vector<std::uint8_t>>& messages,
                      const PolarCode& code, const SymbolTable& symbols) {
  std::vector<std::vector<std::uint8_t>> codewords;
  codewords.reserve(messages.size());
  for (const auto& m : messages) codewords.push_back(polar_encode(m, code));
  return map_codewords_to_slots(codewords, symbols);
}

}  // namespace obml
