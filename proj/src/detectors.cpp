#include "obml/detectors.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "obml/numerics.hpp"

namespace obml {

namespace {

// Effective outputs psi_{k,i} = sqrt(2 rho / N0) h_i^T s_k for all candidates.
Matrix effective_outputs(const RealChannel& h, const LinkParams& params,
                         const SymbolTable& symbols) {
  const std::size_t count = symbols.count();
  const std::size_t ports = h.real_ports();
  if (symbols.num_users() != h.num_users) {
    throw std::invalid_argument("effective_outputs: user count mismatch");
  }
  Matrix psi(count, ports);
  const double scale = std::sqrt(2.0 * params.rho / params.n0);
  std::vector<double> tmp(ports);
  for (std::size_t k = 0; k < count; ++k) {
    h.apply_transpose(symbols.real_vector(k), tmp);
    for (std::size_t i = 0; i < ports; ++i) psi(k, i) = scale * tmp[i];
  }
  return psi;
}

DetectionResult make_result(std::size_t k, double score, const SymbolTable* symbols) {
  DetectionResult res;
  res.k_star = k;
  res.log_likelihood = score;
  if (symbols) res.user_symbols = symbols->user_symbols(k);
  return res;
}

// Cholesky solve of the SPD system (A A^T) w = b where A is 2Nu x 2Nr.
// Returns false when a pivot collapses (rank-deficient channel).
bool cholesky_spd(Matrix& a) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t p = 0; p < j; ++p) d -= a(j, p) * a(j, p);
    if (!(d > 1e-12)) return false;
    const double l = std::sqrt(d);
    a(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t p = 0; p < j; ++p) s -= a(i, p) * a(j, p);
      a(i, j) = s / l;
    }
  }
  return true;
}

}  // namespace

LogLikelihoodScorer LogLikelihoodScorer::from_table(const LikelihoodTable& table) {
  if (!table.finalized()) {
    throw std::logic_error("LogLikelihoodScorer: table must be finalized");
  }
  LogLikelihoodScorer s;
  const std::size_t count = table.count();
  const std::size_t ports = table.ports();
  s.diff_ = Matrix(count, ports);
  s.base_.assign(count, 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    const auto lp = table.log_p_plus_row(k);
    const auto lm = table.log_p_minus_row(k);
    double base = 0.0;
    for (std::size_t i = 0; i < ports; ++i) {
      s.diff_(k, i) = lp[i] - lm[i];
      base += lm[i];
    }
    s.base_[k] = base;
  }
  return s;
}

LogLikelihoodScorer LogLikelihoodScorer::from_csi(const RealChannel& h, const LinkParams& params,
                                                  const SymbolTable& symbols) {
  const Matrix psi = effective_outputs(h, params, symbols);
  LogLikelihoodScorer s;
  const std::size_t count = psi.rows();
  const std::size_t ports = psi.cols();
  s.diff_ = Matrix(count, ports);
  s.base_.assign(count, 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    double base = 0.0;
    for (std::size_t i = 0; i < ports; ++i) {
      const double lp = log_std_normal_cdf(psi(k, i));
      const double lm = log_std_normal_cdf(-psi(k, i));
      s.diff_(k, i) = lp - lm;
      base += lm;
    }
    s.base_[k] = base;
  }
  return s;
}

namespace {

std::vector<double>& sign_mask(const Observation& y) {
  thread_local std::vector<double> mask;
  mask.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) mask[i] = y.signs[i] > 0 ? 1.0 : 0.0;
  return mask;
}

}  // namespace

void LogLikelihoodScorer::scores(const Observation& y, std::span<double> out) const {
  const std::size_t count = this->count();
  const std::size_t ports = this->ports();
  if (y.size() != ports || out.size() != count) {
    throw std::invalid_argument("LogLikelihoodScorer: dimension mismatch");
  }
  const std::vector<double>& mask = sign_mask(y);
  for (std::size_t k = 0; k < count; ++k) {
    const double* row = diff_.row(k).data();
    double acc = 0.0;
    for (std::size_t i = 0; i < ports; ++i) acc += mask[i] * row[i];
    out[k] = base_[k] + acc;
  }
}

std::size_t LogLikelihoodScorer::best(const Observation& y, double* best_score) const {
  const std::size_t count = this->count();
  const std::size_t ports = this->ports();
  if (y.size() != ports) throw std::invalid_argument("LogLikelihoodScorer: dimension mismatch");
  const std::vector<double>& mask = sign_mask(y);
  std::size_t best_k = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < count; ++k) {
    const double* row = diff_.row(k).data();
    double acc = 0.0;
    for (std::size_t i = 0; i < ports; ++i) acc += mask[i] * row[i];
    const double v = base_[k] + acc;
    if (v > best_v) {
      best_v = v;
      best_k = k;
    }
  }
  if (best_score) *best_score = best_v;
  return best_k;
}

UnquantizedMlDetector::UnquantizedMlDetector(const RealChannel& h, const LinkParams& params,
                                             const SymbolTable& symbols) {
  const std::size_t count = symbols.count();
  const std::size_t ports = h.real_ports();
  v_ = Matrix(count, ports);
  energy_.assign(count, 0.0);
  amp_ = std::sqrt(params.rho);
  std::vector<double> tmp(ports);
  for (std::size_t k = 0; k < count; ++k) {
    h.apply_transpose(symbols.real_vector(k), tmp);
    double e = 0.0;
    for (std::size_t i = 0; i < ports; ++i) {
      v_(k, i) = tmp[i];
      e += tmp[i] * tmp[i];
    }
    energy_[k] = params.rho * e;
  }
}

std::size_t UnquantizedMlDetector::best(std::span<const double> r) const {
  if (r.size() != v_.cols()) throw std::invalid_argument("UnquantizedMlDetector: dimension mismatch");
  // argmin ||r - sqrt(rho) v_k||^2 = argmax 2 sqrt(rho) r.v_k - rho ||v_k||^2
  std::size_t best_k = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < v_.rows(); ++k) {
    const double* row = v_.row(k).data();
    double dot = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) dot += r[i] * row[i];
    const double v = 2.0 * amp_ * dot - energy_[k];
    if (v > best_v) {
      best_v = v;
      best_k = k;
    }
  }
  return best_k;
}

bool ZfDetector::full_rank(const RealChannel& h) {
  const std::size_t dims = h.real_dims();
  Matrix gram(dims, dims);
  for (std::size_t a = 0; a < dims; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      double s = 0.0;
      const double* ra = h.h.row(a).data();
      const double* rb = h.h.row(b).data();
      for (std::size_t i = 0; i < h.real_ports(); ++i) s += ra[i] * rb[i];
      gram(a, b) = gram(b, a) = s;
    }
  }
  return cholesky_spd(gram);
}

ZfDetector::ZfDetector(const RealChannel& h, const LinkParams& params, const SymbolTable& symbols)
    : symbols_(&symbols), num_users_(h.num_users) {
  (void)params;
  if (symbols.num_users() != h.num_users) {
    throw std::invalid_argument("ZfDetector: user count mismatch");
  }
  const std::size_t dims = h.real_dims();
  const std::size_t ports = h.real_ports();

  // pinv(H^T) = (H H^T)^{-1} H via Cholesky of the Gram matrix.
  Matrix gram(dims, dims);
  for (std::size_t a = 0; a < dims; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      double s = 0.0;
      const double* ra = h.h.row(a).data();
      const double* rb = h.h.row(b).data();
      for (std::size_t i = 0; i < ports; ++i) s += ra[i] * rb[i];
      gram(a, b) = gram(b, a) = s;
    }
  }
  if (!cholesky_spd(gram)) {
    throw std::invalid_argument("ZfDetector: rank-deficient channel");
  }
  // Solve (L L^T) P = H column-wise.
  pinv_ = Matrix(dims, ports);
  std::vector<double> col(dims);
  for (std::size_t i = 0; i < ports; ++i) {
    for (std::size_t a = 0; a < dims; ++a) col[a] = h.h(a, i);
    // forward substitution
    for (std::size_t a = 0; a < dims; ++a) {
      double s = col[a];
      for (std::size_t p = 0; p < a; ++p) s -= gram(a, p) * col[p];
      col[a] = s / gram(a, a);
    }
    // back substitution
    for (std::size_t a = dims; a-- > 0;) {
      double s = col[a];
      for (std::size_t p = a + 1; p < dims; ++p) s -= gram(p, a) * col[p];
      col[a] = s / gram(a, a);
    }
    for (std::size_t a = 0; a < dims; ++a) pinv_(a, i) = col[a];
  }
}

std::vector<double> ZfDetector::equalize(std::span<const double> input) const {
  const std::size_t dims = pinv_.rows();
  if (input.size() != pinv_.cols()) throw std::invalid_argument("ZfDetector: dimension mismatch");
  std::vector<double> x(dims, 0.0);
  for (std::size_t a = 0; a < dims; ++a) {
    const double* row = pinv_.row(a).data();
    double s = 0.0;
    for (std::size_t i = 0; i < input.size(); ++i) s += row[i] * input[i];
    x[a] = s;
  }
  return x;
}

std::size_t ZfDetector::best(const Observation& y) const {
  const std::size_t dims = pinv_.rows();
  if (y.size() != pinv_.cols()) throw std::invalid_argument("ZfDetector: dimension mismatch");
  std::vector<double> in(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) in[i] = static_cast<double>(y.signs[i]);
  const std::vector<double> x = equalize(in);
  std::vector<int> labels(num_users_);
  for (std::size_t u = 0; u < num_users_; ++u) {
    labels[u] = symbols_->nearest_label(cplx(x[u], x[u + num_users_]));
  }
  return symbols_->index_of_labels(labels);
}

DetectionResult ml_detect_csi(const Observation& y, const RealChannel& h,
                              const LinkParams& params, const SymbolTable& symbols) {
  const auto scorer = LogLikelihoodScorer::from_csi(h, params, symbols);
  double score = 0.0;
  const std::size_t k = scorer.best(y, &score);
  return make_result(k, score, &symbols);
}

DetectionResult ml_detect_learned(const Observation& y, const LikelihoodTable& table,
                                  const SymbolTable* symbols) {
  const auto scorer = LogLikelihoodScorer::from_table(table);
  double score = 0.0;
  const std::size_t k = scorer.best(y, &score);
  return make_result(k, score, symbols);
}

DetectionResult zf_detect(const Observation& y, const RealChannel& h, const LinkParams& params,
                          const SymbolTable& symbols) {
  if (!ZfDetector::full_rank(h)) {
    DetectionResult res;
    res.valid = false;
    return res;
  }
  ZfDetector det(h, params, symbols);
  const std::size_t k = det.best(y);
  return make_result(k, 0.0, &symbols);
}

DetectionResult ml_detect_unquantized(std::span<const double> r, const RealChannel& h,
                                      const LinkParams& params, const SymbolTable& symbols) {
  UnquantizedMlDetector det(h, params, symbols);
  const std::size_t k = det.best(r);
  // Report the attained (negated) squared distance as the score.
  std::vector<double> v(h.real_ports());
  h.apply_transpose(symbols.real_vector(k), v);
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double e = r[i] - std::sqrt(params.rho) * v[i];
    d += e * e;
  }
  auto res = make_result(k, -d, &symbols);
  return res;
}

}  // namespace obml
