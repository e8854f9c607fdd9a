#include "obml/likelihood.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "obml/numerics.hpp"

namespace obml {

LikelihoodTable::LikelihoodTable(std::size_t count, std::size_t ports, std::size_t n_tr,
                                 FloorRule rule)
    : p_plus_(count, ports), n_tr_(n_tr), rule_(rule) {}

void LikelihoodTable::set_p_plus(std::size_t k, std::size_t i, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("LikelihoodTable: probability outside [0,1]");
  if (finalized_) throw std::logic_error("LikelihoodTable: cannot mutate a finalized table");
  p_plus_(k, i) = p;
}

std::span<const double> LikelihoodTable::log_p_plus_row(std::size_t k) const {
  if (!finalized_) throw std::logic_error("LikelihoodTable: log cache requires a finalized table");
  return log_p_plus_.row(k);
}

std::span<const double> LikelihoodTable::log_p_minus_row(std::size_t k) const {
  if (!finalized_) throw std::logic_error("LikelihoodTable: log cache requires a finalized table");
  return log_p_minus_.row(k);
}

void LikelihoodTable::build_log_cache() {
  log_p_plus_ = Matrix(count(), ports());
  log_p_minus_ = Matrix(count(), ports());
  for (std::size_t k = 0; k < count(); ++k) {
    for (std::size_t i = 0; i < ports(); ++i) {
      log_p_plus_(k, i) = std::log(p_plus_(k, i));
      log_p_minus_(k, i) = std::log1p(-p_plus_(k, i));
    }
  }
}

void LikelihoodTable::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("LikelihoodTable::save: cannot open " + path);
  out << "obml-likelihood-table v1\n";
  out << count() << ' ' << ports() << ' ' << n_tr_ << ' ' << static_cast<int>(rule_) << ' '
      << (finalized_ ? 1 : 0) << '\n';
  out.precision(17);
  for (std::size_t k = 0; k < count(); ++k) {
    const auto row = p_plus_.row(k);
    for (std::size_t i = 0; i < row.size(); ++i) out << row[i] << (i + 1 < row.size() ? ' ' : '\n');
  }
  if (!out) throw std::runtime_error("LikelihoodTable::save: write failed for " + path);
}

LikelihoodTable LikelihoodTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("LikelihoodTable::load: cannot open " + path);
  std::string tag, version;
  in >> tag >> version;
  if (tag != "obml-likelihood-table" || version != "v1") {
    throw std::runtime_error("LikelihoodTable::load: unrecognized header in " + path);
  }
  std::size_t count = 0, ports = 0, n_tr = 0;
  int rule = 0, finalized = 0;
  in >> count >> ports >> n_tr >> rule >> finalized;
  if (!in || rule != 0) throw std::runtime_error("LikelihoodTable::load: bad header in " + path);
  LikelihoodTable t(count, ports, n_tr, static_cast<FloorRule>(rule));
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t i = 0; i < ports; ++i) {
      double p;
      in >> p;
      if (!in) throw std::runtime_error("LikelihoodTable::load: truncated table in " + path);
      t.p_plus_(k, i) = p;
    }
  }
  if (finalized) {
    t.finalized_ = true;
    t.build_log_cache();
  }
  return t;
}

void TrainConfig::validate() const {
  if (n_tr == 0 || n_s == 0) throw std::invalid_argument("TrainConfig: n_tr and n_s must be positive");
  if (n_tr % n_s != 0) throw std::invalid_argument("TrainConfig: n_s must divide n_tr");
  if (sigma2_init < 0.0 || delta < 0.0) {
    throw std::invalid_argument("TrainConfig: sigma2_init and delta must be >= 0");
  }
}

double empirical_sign_prob(std::span<const std::int8_t> signs) {
  if (signs.empty()) throw std::domain_error("empirical_sign_prob: empty sequence");
  std::size_t plus = 0;
  for (auto s : signs) plus += (s > 0);
  return static_cast<double>(plus) / static_cast<double>(signs.size());
}

LikelihoodTable naive_learn(const std::vector<std::vector<Observation>>& pilot_groups,
                            std::size_t n_tr) {
  if (pilot_groups.empty()) throw std::invalid_argument("naive_learn: no pilot groups");
  const std::size_t ports = pilot_groups.front().front().size();
  LikelihoodTable table(pilot_groups.size(), ports, n_tr);
  for (std::size_t k = 0; k < pilot_groups.size(); ++k) {
    const auto& group = pilot_groups[k];
    if (group.size() != n_tr) {
      throw std::invalid_argument("naive_learn: group size must equal n_tr");
    }
    for (std::size_t i = 0; i < ports; ++i) {
      std::size_t plus = 0;
      for (const auto& obs : group) {
        if (obs.size() != ports) throw std::invalid_argument("naive_learn: port count mismatch");
        plus += (obs.signs[i] > 0);
      }
      table.set_p_plus(k, i, static_cast<double>(plus) / static_cast<double>(n_tr));
    }
  }
  return table;
}

double denoise(double p_dithered, double sigma2_i, double n0) {
  if (!(p_dithered > 0.0 && p_dithered < 1.0)) {
    throw std::domain_error("denoise: saturated probability, clamp before inverting");
  }
  return std::sqrt(1.0 + sigma2_i / n0) * std_normal_cdf_inv(p_dithered);
}

AdlResult adl_train(const DitherPilotSource& source, std::size_t count, std::size_t ports,
                    const TrainConfig& cfg, const LinkParams& params) {
  cfg.validate();
  if (count == 0 || ports == 0) throw std::invalid_argument("adl_train: empty dimensions");

  const std::size_t n_sub = cfg.n_tr_sub();
  // Continuity correction applied before Phi^{-1} on sign-constant sub-blocks.
  const double p_lo = 1.0 / (2.0 * static_cast<double>(n_sub));
  const double p_hi = 1.0 - p_lo;

  AdlResult res;
  res.table = LikelihoodTable(count, ports, cfg.n_tr, cfg.floor_rule);
  res.outputs.psi_hat = Matrix(count, ports);
  res.trace.undertrained_per_k.assign(count, 0);
  res.trace.final_sigma2 = Matrix(count, ports);
  if (cfg.record_sigma_path) res.trace.sigma2_path.reserve(count);

  std::vector<double> sigma2(ports);
  std::vector<std::size_t> plus_count(ports);
  std::vector<std::uint32_t> constant_blocks(ports);
  std::vector<double> p_acc(ports);

  for (std::size_t k = 0; k < count; ++k) {
    std::fill(sigma2.begin(), sigma2.end(), cfg.sigma2_init);
    std::fill(constant_blocks.begin(), constant_blocks.end(), 0u);
    std::fill(p_acc.begin(), p_acc.end(), 0.0);
    Matrix path;
    if (cfg.record_sigma_path) {
      path = Matrix(cfg.n_s + 1, ports);
      for (std::size_t i = 0; i < ports; ++i) path(0, i) = sigma2[i];
    }

    for (std::size_t n = 0; n < cfg.n_s; ++n) {
      std::fill(plus_count.begin(), plus_count.end(), std::size_t{0});
      for (std::size_t t = 0; t < n_sub; ++t) {
        const Observation obs = source(k, sigma2);
        if (obs.size() != ports) {
          throw std::invalid_argument("adl_train: pilot source port count mismatch");
        }
        for (std::size_t i = 0; i < ports; ++i) plus_count[i] += (obs.signs[i] > 0);
      }
      for (std::size_t i = 0; i < ports; ++i) {
        const double p_raw = static_cast<double>(plus_count[i]) / static_cast<double>(n_sub);
        const double p_hat = std::min(std::max(p_raw, p_lo), p_hi);
        const double psi = denoise(p_hat, sigma2[i], params.n0);
        p_acc[i] += std_normal_cdf(psi) / static_cast<double>(cfg.n_s);
        res.outputs.psi_hat(k, i) += psi / static_cast<double>(cfg.n_s);
        const bool sign_constant = (plus_count[i] == 0 || plus_count[i] == n_sub);
        if (sign_constant) {
          ++constant_blocks[i];
          sigma2[i] += cfg.delta;
        }
      }
      if (cfg.record_sigma_path) {
        for (std::size_t i = 0; i < ports; ++i) path(n + 1, i) = sigma2[i];
      }
    }

    std::uint32_t undertrained = 0;
    for (std::size_t i = 0; i < ports; ++i) {
      res.table.set_p_plus(k, i, p_acc[i]);
      res.trace.final_sigma2(k, i) = sigma2[i];
      if (constant_blocks[i] == cfg.n_s) ++undertrained;
    }
    res.trace.undertrained_per_k[k] = undertrained;
    if (cfg.record_sigma_path) res.trace.sigma2_path.push_back(std::move(path));
  }

  res.table = finalize_floor(std::move(res.table), &res.trace);
  return res;
}

LikelihoodTable finalize_floor(LikelihoodTable table, DitherTrace* trace) {
  const std::size_t count = table.count();
  const std::size_t ports = table.ports();
  const double fallback =
      table.training_length() > 0 ? 1.0 / (10.0 * static_cast<double>(table.training_length()))
                                  : 1e-6;

  for (std::size_t k = 0; k < count; ++k) {
    bool used_fallback = false;
    // beta = +1 view fixes zeros of p_plus; beta = -1 view fixes zeros of
    // p_minus (entries with p_plus == 1).
    for (int view = 0; view < 2; ++view) {
      double min_nonzero = std::numeric_limits<double>::infinity();
      bool any_zero = false;
      for (std::size_t i = 0; i < ports; ++i) {
        const double p = view == 0 ? table.p_plus(k, i) : table.p_minus(k, i);
        if (p <= 0.0) {
          any_zero = true;
        } else if (p < min_nonzero) {
          min_nonzero = p;
        }
      }
      if (!any_zero) continue;
      double p_min;
      if (std::isfinite(min_nonzero)) {
        p_min = std::min(min_nonzero / 10.0, fallback);
      } else {
        p_min = fallback;  // whole view under-trained
        used_fallback = true;
      }
      // Keep the stored probability and its complement strictly inside (0,1)
      // even when the rule lands below one ulp.
      p_min = std::max(p_min, std::numeric_limits<double>::denorm_min());
      const double one_side = std::nextafter(1.0, 0.0);
      for (std::size_t i = 0; i < ports; ++i) {
        const double p = view == 0 ? table.p_plus(k, i) : table.p_minus(k, i);
        if (p <= 0.0) {
          table.p_plus_(k, i) = view == 0 ? p_min : std::min(1.0 - p_min, one_side);
        }
      }
    }
    if (used_fallback && trace) trace->fallback_rows.push_back(static_cast<std::uint32_t>(k));
  }

  table.finalized_ = true;
  table.build_log_cache();
  return table;
}

std::vector<std::uint32_t> count_undertrained(const LikelihoodTable& table) {
  std::vector<std::uint32_t> counts(table.count(), 0);
  for (std::size_t k = 0; k < table.count(); ++k) {
    std::uint32_t c = 0;
    for (std::size_t i = 0; i < table.ports(); ++i) {
      const double p = table.p_plus(k, i);
      if (p == 0.0 || p == 1.0) ++c;
    }
    counts[k] = c;
  }
  return counts;
}

}  // namespace obml
