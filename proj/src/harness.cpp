#include "obml/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "obml/detectors.hpp"

namespace obml {

namespace {

// Fixed per-block stream roles; every consumer owns an independent stream so
// that adding or removing detectors never shifts anyone else's draws.
enum Role : std::uint64_t {
  kRoleChannel = 0,
  kRoleTrainNoise = 1,
  kRoleDataNoise = 2,
  kRoleDataSymbols = 3,
  kRoleEstWindow = 4,
  kRoleMessages = 5,
  kRoleDitherBase = 8,  // + adl variant index
};

// Stopping-rule checks happen at this many blocks regardless of thread count,
// keeping results identical under any --threads value.
constexpr std::uint64_t kBatchBlocks = 8;

std::uint64_t stream_id(std::size_t snr_idx, std::uint64_t block, std::uint64_t role) {
  return (static_cast<std::uint64_t>(snr_idx) << 40) | (block << 8) | role;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::invalid_argument("config: bad flag for " + key + ": '" + v + "'");
}

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

// Immutable per-sweep state shared by all worker threads.
struct SweepContext {
  const SimConfig* cfg = nullptr;
  SymbolTable symbols;
  std::vector<DetectorSpec> specs;
  std::vector<std::size_t> adl_ordinal;  // per spec: dither stream index or npos
  bool use_estimated = false;
  MlpModel est_model;
  PolarCode code;
  BitSubsets subsets;
};

SweepContext make_context(const SimConfig& cfg, bool coded) {
  SweepContext ctx;
  ctx.cfg = &cfg;
  ctx.symbols = build_symbol_table(cfg.m_order, cfg.nu);
  ctx.specs = cfg.parse_detectors();
  ctx.adl_ordinal.assign(ctx.specs.size(), static_cast<std::size_t>(-1));
  std::size_t next_adl = 0;
  bool any_adl = false;
  for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
    if (ctx.specs[s].is_adl) {
      ctx.adl_ordinal[s] = next_adl++;
      any_adl = true;
    }
  }
  ctx.use_estimated = cfg.snr_model == SnrModelMode::estimated && any_adl;
  if (ctx.use_estimated) {
    if (cfg.snr_model_path.empty()) {
      throw std::invalid_argument("snr_model=estimated requires a weights path");
    }
    ctx.est_model = MlpModel::load(cfg.snr_model_path);
    if (ctx.est_model.input_width() != 2 * cfg.nr) {
      throw std::invalid_argument("snr model width does not match 2*Nr");
    }
  }
  if (coded) {
    if (!cfg.frozen_file.empty()) {
      ctx.code = load_frozen_set(cfg.frozen_file, cfg.list_size);
      if (ctx.code.block_length != cfg.eta || ctx.code.message_length != cfg.kappa) {
        throw std::invalid_argument("frozen_file does not match (eta, kappa)");
      }
    } else {
      ctx.code = polar_construct(cfg.eta, cfg.kappa, cfg.design_snr_db, cfg.list_size);
    }
    ctx.subsets = build_bit_subsets(ctx.symbols);
  }
  return ctx;
}

struct BlockDetectors {
  std::vector<std::optional<LogLikelihoodScorer>> scorer;  // per spec
  std::optional<UnquantizedMlDetector> inf;
  std::optional<ZfDetector> zf;
  bool zf_ok = true;
};

// Pilot-phase training for every active detector of one coherence block. All
// learners see the same thermal noise per pilot slot; each ADL variant owns
// its dithering stream.
BlockDetectors train_block_detectors(const SweepContext& ctx, std::size_t snr_idx,
                                     std::uint64_t block, const std::vector<char>& active,
                                     const RealChannel& h, const Matrix& v,
                                     const LinkParams& params) {
  const SimConfig& cfg = *ctx.cfg;
  const std::size_t count = ctx.symbols.count();
  const std::size_t ports = h.real_ports();
  const double amp = std::sqrt(params.rho);

  BlockDetectors out;
  out.scorer.resize(ctx.specs.size());

  bool need_pilots = false;
  bool any_adl_active = false;
  for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
    if (!active[s]) continue;
    const auto& token = ctx.specs[s].token;
    if (token == "naive" || ctx.specs[s].is_adl) need_pilots = true;
    if (ctx.specs[s].is_adl) any_adl_active = true;
  }

  Matrix z;
  if (need_pilots) {
    RngStream zs(cfg.seed, stream_id(snr_idx, block, kRoleTrainNoise));
    z = Matrix(count * cfg.n_tr, ports);
    const double half_n0 = params.n0 / 2.0;
    double* data = z.data();
    const std::size_t total = count * cfg.n_tr * ports;
    for (std::size_t e = 0; e < total; ++e) data[e] = zs.gaussian(0.0, half_n0);
  }

  LinkParams assumed = params;
  if (ctx.use_estimated && any_adl_active) {
    RngStream es(cfg.seed, stream_id(snr_idx, block, kRoleEstWindow));
    std::vector<Observation> window(cfg.est_window);
    std::vector<double> r(ports);
    const double half_n0 = params.n0 / 2.0;
    for (auto& obs : window) {
      for (std::size_t i = 0; i < ports; ++i) r[i] = amp * v(0, i) + es.gaussian(0.0, half_n0);
      obs = one_bit_quantize(r);
    }
    assumed = LinkParams::from_snr_db(estimate_snr(window, ctx.est_model), params.rho);
  }

  for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
    if (!active[s]) continue;
    const DetectorSpec& spec = ctx.specs[s];
    if (spec.token == "ml_csi") {
      out.scorer[s] = LogLikelihoodScorer::from_csi(h, params, ctx.symbols);
    } else if (spec.token == "ml_inf") {
      out.inf.emplace(h, params, ctx.symbols);
    } else if (spec.token == "zf") {
      if (ZfDetector::full_rank(h)) {
        out.zf.emplace(h, params, ctx.symbols);
      } else {
        out.zf_ok = false;
      }
    } else if (spec.token == "naive") {
      std::vector<std::vector<Observation>> groups(count);
      std::vector<double> r(ports);
      for (std::size_t k = 0; k < count; ++k) {
        groups[k].resize(cfg.n_tr);
        for (std::size_t t = 0; t < cfg.n_tr; ++t) {
          const std::size_t slot = k * cfg.n_tr + t;
          for (std::size_t i = 0; i < ports; ++i) r[i] = amp * v(k, i) + z(slot, i);
          groups[k][t] = one_bit_quantize(r);
        }
      }
      LikelihoodTable table = finalize_floor(naive_learn(groups, cfg.n_tr));
      out.scorer[s] = LogLikelihoodScorer::from_table(table);
    } else if (spec.is_adl) {
      RngStream ds(cfg.seed,
                   stream_id(snr_idx, block, kRoleDitherBase + ctx.adl_ordinal[s]));
      std::size_t cursor = 0;
      DitherPilotSource source = [&](std::size_t k, std::span<const double> sigma2) {
        Observation obs;
        obs.signs.resize(ports);
        const std::size_t slot = cursor++;
        for (std::size_t i = 0; i < ports; ++i) {
          const double val = amp * v(k, i) + z(slot, i) + ds.gaussian(0.0, sigma2[i] / 2.0);
          obs.signs[i] = val > 0.0 ? std::int8_t{1} : std::int8_t{-1};
        }
        return obs;
      };
      TrainConfig tc;
      tc.n_tr = cfg.n_tr;
      tc.n_s = spec.n_s;
      tc.sigma2_init = cfg.sigma2_init;
      tc.delta = cfg.delta;
      AdlResult res = adl_train(source, count, ports, tc, assumed);
      out.scorer[s] = LogLikelihoodScorer::from_table(res.table);
    } else {
      throw std::logic_error("unhandled detector token " + spec.token);
    }
  }
  return out;
}

Matrix candidate_outputs(const SymbolTable& symbols, const RealChannel& h) {
  Matrix v(symbols.count(), h.real_ports());
  std::vector<double> tmp(h.real_ports());
  for (std::size_t k = 0; k < symbols.count(); ++k) {
    h.apply_transpose(symbols.real_vector(k), tmp);
    for (std::size_t i = 0; i < tmp.size(); ++i) v(k, i) = tmp[i];
  }
  return v;
}

struct SerBlockResult {
  std::vector<std::uint64_t> vec_err;
  std::vector<std::uint64_t> user_err;
};

SerBlockResult run_ser_block(const SweepContext& ctx, std::size_t snr_idx, std::uint64_t block,
                             const std::vector<char>& active) {
  const SimConfig& cfg = *ctx.cfg;
  const LinkParams params = LinkParams::from_snr_db(cfg.snr_grid_db[snr_idx]);
  RngStream ch(cfg.seed, stream_id(snr_idx, block, kRoleChannel));
  const RealChannel h = lift_channel(gen_rayleigh_channel(cfg.nu, cfg.nr, ch));
  const Matrix v = candidate_outputs(ctx.symbols, h);
  const std::size_t count = ctx.symbols.count();
  const std::size_t ports = h.real_ports();
  const double amp = std::sqrt(params.rho);

  const BlockDetectors det = train_block_detectors(ctx, snr_idx, block, active, h, v, params);

  SerBlockResult res;
  res.vec_err.assign(ctx.specs.size(), 0);
  res.user_err.assign(ctx.specs.size(), 0);

  RngStream dn(cfg.seed, stream_id(snr_idx, block, kRoleDataNoise));
  RngStream dsym(cfg.seed, stream_id(snr_idx, block, kRoleDataSymbols));
  std::vector<double> r(ports);
  Observation y;
  const double half_n0 = params.n0 / 2.0;

  for (std::size_t t = 0; t < cfg.data_per_block; ++t) {
    const std::size_t k = dsym.next_u64() % count;
    for (std::size_t i = 0; i < ports; ++i) r[i] = amp * v(k, i) + dn.gaussian(0.0, half_n0);
    y = one_bit_quantize(r);
    for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
      if (!active[s]) continue;
      std::size_t k_hat = count;  // invalid sentinel
      const auto& token = ctx.specs[s].token;
      if (token == "ml_inf") {
        k_hat = det.inf->best(r);
      } else if (token == "zf") {
        if (det.zf_ok) k_hat = det.zf->best(y);
      } else {
        k_hat = det.scorer[s]->best(y);
      }
      if (k_hat != k) ++res.vec_err[s];
      if (k_hat == k) continue;
      if (k_hat >= count) {
        res.user_err[s] += cfg.nu;
        continue;
      }
      for (std::size_t u = 0; u < cfg.nu; ++u) {
        if (ctx.symbols.label(k, u) != ctx.symbols.label(k_hat, u)) ++res.user_err[s];
      }
    }
  }
  return res;
}

struct FerBlockResult {
  std::vector<std::uint64_t> frame_err;
};

FerBlockResult run_fer_block(const SweepContext& ctx, std::size_t snr_idx, std::uint64_t block,
                             const std::vector<char>& active) {
  const SimConfig& cfg = *ctx.cfg;
  const LinkParams params = LinkParams::from_snr_db(cfg.snr_grid_db[snr_idx]);
  RngStream ch(cfg.seed, stream_id(snr_idx, block, kRoleChannel));
  const RealChannel h = lift_channel(gen_rayleigh_channel(cfg.nu, cfg.nr, ch));
  const Matrix v = candidate_outputs(ctx.symbols, h);
  const std::size_t ports = h.real_ports();
  const double amp = std::sqrt(params.rho);
  const int q = ctx.symbols.bits_per_symbol();
  const std::size_t slots = ctx.code.block_length / q;

  const BlockDetectors det = train_block_detectors(ctx, snr_idx, block, active, h, v, params);

  FerBlockResult res;
  res.frame_err.assign(ctx.specs.size(), 0);

  RngStream dn(cfg.seed, stream_id(snr_idx, block, kRoleDataNoise));
  RngStream msgs(cfg.seed, stream_id(snr_idx, block, kRoleMessages));
  const double half_n0 = params.n0 / 2.0;

  std::vector<std::vector<std::uint8_t>> messages(cfg.nu);
  std::vector<std::vector<std::uint8_t>> codewords(cfg.nu);
  std::vector<int> labels(cfg.nu);
  std::vector<double> r(ports);
  std::vector<double> scores(ctx.symbols.count());
  // per spec, per user, per code-bit LLR buffer
  std::vector<std::vector<std::vector<double>>> llr(ctx.specs.size());
  for (auto& per_user : llr) {
    per_user.assign(cfg.nu, std::vector<double>(ctx.code.block_length));
  }

  for (std::size_t f = 0; f < cfg.frames_per_block; ++f) {
    for (std::size_t u = 0; u < cfg.nu; ++u) {
      messages[u].resize(cfg.kappa);
      for (auto& b : messages[u]) b = static_cast<std::uint8_t>(msgs.next_u64() & 1);
      codewords[u] = polar_encode(messages[u], ctx.code);
    }
    for (std::size_t t = 0; t < slots; ++t) {
      for (std::size_t u = 0; u < cfg.nu; ++u) {
        int label = 0;
        for (int b = 0; b < q; ++b) label = (label << 1) | codewords[u][t * q + b];
        labels[u] = label;
      }
      const std::size_t k = ctx.symbols.index_of_labels(labels);
      for (std::size_t i = 0; i < ports; ++i) r[i] = amp * v(k, i) + dn.gaussian(0.0, half_n0);
      const Observation y = one_bit_quantize(r);
      for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
        if (!active[s]) continue;
        det.scorer[s]->scores(y, scores);
        const Matrix slot_llr = compute_llr_from_scores(scores, ctx.subsets);
        for (std::size_t u = 0; u < cfg.nu; ++u) {
          for (int b = 0; b < q; ++b) llr[s][u][t * q + b] = slot_llr(u, b);
        }
      }
    }
    for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
      if (!active[s]) continue;
      bool err = false;
      for (std::size_t u = 0; u < cfg.nu && !err; ++u) {
        const auto decoded = scl_decode(llr[s][u], ctx.code);
        err = decoded != messages[u];
      }
      if (err) ++res.frame_err[s];
    }
  }
  return res;
}

struct UndertrainedBlockResult {
  std::vector<std::uint64_t> count_sum;  // per spec, summed over candidates
};

UndertrainedBlockResult run_undertrained_block(const SweepContext& ctx, std::size_t snr_idx,
                                               std::uint64_t block) {
  const SimConfig& cfg = *ctx.cfg;
  const LinkParams params = LinkParams::from_snr_db(cfg.snr_grid_db[snr_idx]);
  RngStream ch(cfg.seed, stream_id(snr_idx, block, kRoleChannel));
  const RealChannel h = lift_channel(gen_rayleigh_channel(cfg.nu, cfg.nr, ch));
  const Matrix v = candidate_outputs(ctx.symbols, h);
  const std::size_t count = ctx.symbols.count();
  const std::size_t ports = h.real_ports();
  const double amp = std::sqrt(params.rho);

  RngStream zs(cfg.seed, stream_id(snr_idx, block, kRoleTrainNoise));
  Matrix z(count * cfg.n_tr, ports);
  {
    const double half_n0 = params.n0 / 2.0;
    double* data = z.data();
    const std::size_t total = count * cfg.n_tr * ports;
    for (std::size_t e = 0; e < total; ++e) data[e] = zs.gaussian(0.0, half_n0);
  }

  UndertrainedBlockResult res;
  res.count_sum.assign(ctx.specs.size(), 0);

  for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
    const DetectorSpec& spec = ctx.specs[s];
    if (spec.token == "naive") {
      std::vector<std::vector<Observation>> groups(count);
      std::vector<double> r(ports);
      for (std::size_t k = 0; k < count; ++k) {
        groups[k].resize(cfg.n_tr);
        for (std::size_t t = 0; t < cfg.n_tr; ++t) {
          const std::size_t slot = k * cfg.n_tr + t;
          for (std::size_t i = 0; i < ports; ++i) r[i] = amp * v(k, i) + z(slot, i);
          groups[k][t] = one_bit_quantize(r);
        }
      }
      const LikelihoodTable table = naive_learn(groups, cfg.n_tr);
      for (auto c : count_undertrained(table)) res.count_sum[s] += c;
    } else {  // adl variant
      RngStream ds(cfg.seed, stream_id(snr_idx, block, kRoleDitherBase + ctx.adl_ordinal[s]));
      std::size_t cursor = 0;
      DitherPilotSource source = [&](std::size_t k, std::span<const double> sigma2) {
        Observation obs;
        obs.signs.resize(ports);
        const std::size_t slot = cursor++;
        for (std::size_t i = 0; i < ports; ++i) {
          const double val = amp * v(k, i) + z(slot, i) + ds.gaussian(0.0, sigma2[i] / 2.0);
          obs.signs[i] = val > 0.0 ? std::int8_t{1} : std::int8_t{-1};
        }
        return obs;
      };
      TrainConfig tc;
      tc.n_tr = cfg.n_tr;
      tc.n_s = spec.n_s;
      tc.sigma2_init = cfg.sigma2_init;
      tc.delta = cfg.delta;
      const AdlResult adl = adl_train(source, count, ports, tc, params);
      for (auto c : adl.trace.undertrained_per_k) res.count_sum[s] += c;
    }
  }
  return res;
}

}  // namespace

void SimConfig::validate() const {
  if (nu == 0 || nr == 0) throw std::invalid_argument("config: nu and nr must be positive");
  if (m_order != 4 && m_order != 16 && m_order != 64) {
    throw std::invalid_argument("config: m_order must be 4, 16 or 64");
  }
  if (snr_grid_db.empty()) throw std::invalid_argument("config: snr_db grid is empty");
  if (snr_grid_db.size() > (1u << 20)) throw std::invalid_argument("config: snr grid too large");
  if (n_tr == 0) throw std::invalid_argument("config: n_tr must be positive");
  if (n_s == 0 || n_tr % n_s != 0) throw std::invalid_argument("config: n_s must divide n_tr");
  if (sigma2_init < 0.0 || delta < 0.0) {
    throw std::invalid_argument("config: sigma2_init and delta must be >= 0");
  }
  if (detectors.empty()) throw std::invalid_argument("config: no detectors selected");
  if (min_error_events == 0) throw std::invalid_argument("config: min_error_events must be > 0");
  if (max_trials == 0) throw std::invalid_argument("config: max_trials must be > 0");
  if (data_per_block == 0) throw std::invalid_argument("config: data_per_block must be > 0");
  if (coding) {
    if (!is_power_of_two(eta)) throw std::invalid_argument("config: eta must be a power of two");
    if (kappa > eta) throw std::invalid_argument("config: kappa must be <= eta");
    int q = 0;
    while ((1 << q) < m_order) ++q;
    if (eta % static_cast<std::size_t>(q) != 0) {
      throw std::invalid_argument("config: eta must be divisible by q = log2(M)");
    }
    if (list_size == 0 || frames_per_block == 0) {
      throw std::invalid_argument("config: list_size and frames_per_block must be positive");
    }
  }
  if (snr_model == SnrModelMode::estimated && snr_model_path.empty()) {
    throw std::invalid_argument("config: snr_model=estimated needs a weights path");
  }
  if (est_features != "raw" && est_features != "window_mean") {
    throw std::invalid_argument("config: est_features must be raw or window_mean");
  }
  if (est_window == 0) throw std::invalid_argument("config: est_window must be positive");
  (void)parse_detectors();
}

std::vector<DetectorSpec> SimConfig::parse_detectors() const {
  std::vector<DetectorSpec> specs;
  for (const auto& token : detectors) {
    DetectorSpec spec;
    spec.token = token;
    if (token == "ml_csi" || token == "ml_inf" || token == "zf" || token == "naive") {
      spec.row_id = token;
    } else if (token == "adl" || token.rfind("adl:", 0) == 0) {
      spec.is_adl = true;
      spec.n_s = token == "adl" ? n_s : parse_u64("detectors", token.substr(4));
      if (spec.n_s == 0 || n_tr % spec.n_s != 0) {
        throw std::invalid_argument("config: adl split factor must divide n_tr (" + token + ")");
      }
      spec.token = "adl";
      spec.row_id = "adl_ns" + std::to_string(spec.n_s);
      if (snr_model == SnrModelMode::estimated) spec.row_id += "_est";
    } else {
      throw std::invalid_argument("config: unknown detector token '" + token + "'");
    }
    for (const auto& other : specs) {
      if (other.row_id == spec.row_id) {
        throw std::invalid_argument("config: duplicate detector '" + spec.row_id + "'");
      }
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

SimConfig SimConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: expected key = value at " + path + ":" +
                                  std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config: empty key at " + path + ":" + std::to_string(line_no));
    }
    if (!kv.emplace(key, value).second) {
      throw std::invalid_argument("config: duplicate key '" + key + "' in " + path);
    }
  }
  return from_kv(kv);
}

SimConfig SimConfig::from_kv(const std::map<std::string, std::string>& kv) {
  SimConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "nu") {
      cfg.nu = parse_u64(key, value);
    } else if (key == "nr") {
      cfg.nr = parse_u64(key, value);
    } else if (key == "m_order") {
      cfg.m_order = static_cast<int>(parse_u64(key, value));
    } else if (key == "snr_db") {
      cfg.snr_grid_db.clear();
      for (const auto& tok : split_list(value)) cfg.snr_grid_db.push_back(parse_double(key, tok));
    } else if (key == "n_tr") {
      cfg.n_tr = parse_u64(key, value);
    } else if (key == "n_s") {
      cfg.n_s = parse_u64(key, value);
    } else if (key == "sigma2_init") {
      cfg.sigma2_init = parse_double(key, value);
    } else if (key == "delta") {
      cfg.delta = parse_double(key, value);
    } else if (key == "detectors") {
      cfg.detectors = split_list(value);
    } else if (key == "min_error_events") {
      cfg.min_error_events = parse_u64(key, value);
    } else if (key == "max_trials") {
      cfg.max_trials = parse_u64(key, value);
    } else if (key == "data_per_block") {
      cfg.data_per_block = parse_u64(key, value);
    } else if (key == "coding") {
      cfg.coding = parse_bool(key, value);
    } else if (key == "eta") {
      cfg.eta = parse_u64(key, value);
    } else if (key == "kappa") {
      cfg.kappa = parse_u64(key, value);
    } else if (key == "list_size") {
      cfg.list_size = parse_u64(key, value);
    } else if (key == "frames_per_block") {
      cfg.frames_per_block = parse_u64(key, value);
    } else if (key == "design_snr_db") {
      cfg.design_snr_db = parse_double(key, value);
    } else if (key == "frozen_file") {
      cfg.frozen_file = value;
    } else if (key == "snr_model") {
      if (value == "perfect") {
        cfg.snr_model = SnrModelMode::perfect;
      } else if (value.rfind("estimated:", 0) == 0) {
        cfg.snr_model = SnrModelMode::estimated;
        cfg.snr_model_path = value.substr(10);
      } else {
        throw std::invalid_argument("config: snr_model must be perfect or estimated:<path>");
      }
    } else if (key == "est_window") {
      cfg.est_window = parse_u64(key, value);
    } else if (key == "est_snr_grid_db") {
      cfg.est_snr_grid_db.clear();
      for (const auto& tok : split_list(value)) {
        cfg.est_snr_grid_db.push_back(parse_double(key, tok));
      }
    } else if (key == "est_samples_per_snr") {
      cfg.est_samples_per_snr = parse_u64(key, value);
    } else if (key == "est_features") {
      cfg.est_features = value;
    } else if (key == "est_hidden") {
      cfg.est_hidden.clear();
      for (const auto& tok : split_list(value)) cfg.est_hidden.push_back(parse_u64(key, tok));
    } else if (key == "est_epochs") {
      cfg.est_epochs = parse_u64(key, value);
    } else if (key == "est_batch") {
      cfg.est_batch = parse_u64(key, value);
    } else if (key == "est_lr") {
      cfg.est_lr = parse_double(key, value);
    } else if (key == "est_momentum") {
      cfg.est_momentum = parse_double(key, value);
    } else if (key == "est_lr_decay") {
      cfg.est_lr_decay = parse_double(key, value);
    } else if (key == "est_val_fraction") {
      cfg.est_val_fraction = parse_double(key, value);
    } else if (key == "channel_draws") {
      cfg.channel_draws = parse_u64(key, value);
    } else if (key == "seed") {
      cfg.seed = parse_u64(key, value);
    } else if (key == "threads") {
      cfg.threads = parse_u64(key, value);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

namespace {

struct PointAccum {
  std::vector<std::uint64_t> err;
  std::vector<std::uint64_t> user_err;
  std::vector<std::uint64_t> trials;
  std::vector<char> active;
};

template <typename BlockFn>
PointAccum run_point(const SweepContext& ctx, std::size_t snr_idx, std::uint64_t trials_per_block,
                     BlockFn&& block_fn) {
  const SimConfig& cfg = *ctx.cfg;
  PointAccum acc;
  acc.err.assign(ctx.specs.size(), 0);
  acc.user_err.assign(ctx.specs.size(), 0);
  acc.trials.assign(ctx.specs.size(), 0);
  acc.active.assign(ctx.specs.size(), 1);

  std::uint64_t block = 0;
  std::uint64_t total_trials = 0;
  for (;;) {
    std::vector<SerBlockResult> results(kBatchBlocks);
    const std::vector<char> active = acc.active;  // frozen for the batch
    parallel_for(kBatchBlocks, cfg.threads,
                 [&](std::size_t j) { results[j] = block_fn(snr_idx, block + j, active); });
    for (std::size_t j = 0; j < kBatchBlocks; ++j) {
      for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
        if (!active[s]) continue;
        acc.err[s] += results[j].vec_err[s];
        acc.user_err[s] += results[j].user_err[s];
        acc.trials[s] += trials_per_block;
      }
    }
    block += kBatchBlocks;
    total_trials += kBatchBlocks * trials_per_block;

    bool all_done = true;
    for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
      if (!acc.active[s]) continue;
      if (acc.err[s] >= cfg.min_error_events) {
        acc.active[s] = 0;
      } else {
        all_done = false;
      }
    }
    if (all_done || total_trials >= cfg.max_trials) break;
  }
  return acc;
}

}  // namespace

SweepResult run_ser_sweep(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.coding) throw std::invalid_argument("run_ser_sweep: coding must be off");
  const SweepContext ctx = make_context(cfg, false);

  SweepResult out;
  for (std::size_t snr_idx = 0; snr_idx < cfg.snr_grid_db.size(); ++snr_idx) {
    const PointAccum acc =
        run_point(ctx, snr_idx, cfg.data_per_block,
                  [&](std::size_t si, std::uint64_t block, const std::vector<char>& active) {
                    return run_ser_block(ctx, si, block, active);
                  });
    for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
      const double snr = cfg.snr_grid_db[snr_idx];
      SweepRow row;
      row.snr_db = snr;
      row.detector = ctx.specs[s].row_id;
      row.seed = cfg.seed;
      row.metric = "ser";
      row.num = acc.err[s];
      row.den = acc.trials[s];
      row.value = static_cast<double>(row.num) / static_cast<double>(row.den);
      out.rows.push_back(row);
      row.metric = "ser_user";
      row.num = acc.user_err[s];
      row.den = acc.trials[s] * cfg.nu;
      row.value = static_cast<double>(row.num) / static_cast<double>(row.den);
      out.rows.push_back(row);
    }
  }
  std::stable_sort(out.rows.begin(), out.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.snr_db, a.detector, a.metric) < std::tie(b.snr_db, b.detector, b.metric);
  });
  return out;
}

SweepResult run_fer_sweep(const SimConfig& cfg) {
  cfg.validate();
  if (!cfg.coding) throw std::invalid_argument("run_fer_sweep: coding must be on");
  for (const auto& spec : cfg.parse_detectors()) {
    if (spec.token != "naive" && spec.token != "adl" && spec.token != "ml_csi") {
      throw std::invalid_argument("run_fer_sweep: detector '" + spec.token +
                                  "' has no soft output");
    }
  }
  const SweepContext ctx = make_context(cfg, true);

  SweepResult out;
  for (std::size_t snr_idx = 0; snr_idx < cfg.snr_grid_db.size(); ++snr_idx) {
    const PointAccum acc =
        run_point(ctx, snr_idx, cfg.frames_per_block,
                  [&](std::size_t si, std::uint64_t block, const std::vector<char>& active) {
                    const FerBlockResult fer = run_fer_block(ctx, si, block, active);
                    SerBlockResult shim;
                    shim.vec_err = fer.frame_err;
                    shim.user_err.assign(fer.frame_err.size(), 0);
                    return shim;
                  });
    for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
      SweepRow row;
      row.snr_db = cfg.snr_grid_db[snr_idx];
      row.detector = ctx.specs[s].row_id;
      row.seed = cfg.seed;
      row.metric = "fer";
      row.num = acc.err[s];
      row.den = acc.trials[s];
      row.value = static_cast<double>(row.num) / static_cast<double>(row.den);
      out.rows.push_back(row);
    }
  }
  std::stable_sort(out.rows.begin(), out.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.snr_db, a.detector, a.metric) < std::tie(b.snr_db, b.detector, b.metric);
  });
  return out;
}

SweepResult run_undertrained_sweep(const SimConfig& cfg) {
  cfg.validate();
  for (const auto& spec : cfg.parse_detectors()) {
    if (spec.token != "naive" && spec.token != "adl") {
      throw std::invalid_argument("run_undertrained_sweep: '" + spec.token +
                                  "' is not a learner");
    }
  }
  const SweepContext ctx = make_context(cfg, false);

  SweepResult out;
  for (std::size_t snr_idx = 0; snr_idx < cfg.snr_grid_db.size(); ++snr_idx) {
    std::vector<UndertrainedBlockResult> results(cfg.channel_draws);
    parallel_for(cfg.channel_draws, cfg.threads,
                 [&](std::size_t b) { results[b] = run_undertrained_block(ctx, snr_idx, b); });
    for (std::size_t s = 0; s < ctx.specs.size(); ++s) {
      std::uint64_t sum = 0;
      for (const auto& r : results) sum += r.count_sum[s];
      SweepRow row;
      row.snr_db = cfg.snr_grid_db[snr_idx];
      row.detector = ctx.specs[s].row_id;
      row.metric = "undertrained_mean";
      row.num = sum;
      row.den = static_cast<std::uint64_t>(cfg.channel_draws) * ctx.symbols.count();
      row.value = static_cast<double>(row.num) / static_cast<double>(row.den);
      row.seed = cfg.seed;
      out.rows.push_back(row);
    }
  }
  std::stable_sort(out.rows.begin(), out.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.snr_db, a.detector, a.metric) < std::tie(b.snr_db, b.detector, b.metric);
  });
  return out;
}

MlpModel train_snr_model(const SimConfig& cfg, SnrTrainReport* report) {
  cfg.validate();
  SnrScenario sc;
  sc.num_users = cfg.nu;
  sc.num_antennas = cfg.nr;
  sc.m_order = cfg.m_order;
  sc.snr_grid_db = cfg.est_snr_grid_db.empty() ? cfg.snr_grid_db : cfg.est_snr_grid_db;
  sc.mode = cfg.est_features == "raw" ? SnrFeatureMode::raw : SnrFeatureMode::window_mean;
  sc.window = cfg.est_window;

  RngStream rng(cfg.seed, 0xe5717a7e);
  const SnrDataset data = build_snr_dataset(sc, cfg.est_samples_per_snr, rng);

  SnrTrainOptions opts;
  opts.epochs = cfg.est_epochs;
  opts.batch_size = cfg.est_batch;
  opts.learning_rate = cfg.est_lr;
  opts.momentum = cfg.est_momentum;
  opts.lr_decay = cfg.est_lr_decay;
  opts.validation_fraction = cfg.est_val_fraction;
  opts.seed = cfg.seed;
  return train_snr_estimator(data, cfg.est_hidden, opts, report);
}

std::string format_double_exact(double v) {
  char buf[64];
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void emit_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_csv: cannot open " + path);
  out << "snr_db,detector,metric,value,num,den,seed\n";
  for (const auto& row : result.rows) {
    out << format_double_exact(row.snr_db) << ',' << row.detector << ',' << row.metric << ','
        << format_double_exact(row.value) << ',' << row.num << ',' << row.den << ',' << row.seed
        << '\n';
  }
  if (!out) throw std::runtime_error("emit_csv: write failed for " + path);
}

SweepResult parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "snr_db,detector,metric,value,num,den,seed") {
    throw std::runtime_error("parse_csv: bad header in " + path);
  }
  SweepResult res;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    std::istringstream ls(line);
    while (std::getline(ls, cur, ',')) fields.push_back(cur);
    if (fields.size() != 7) throw std::runtime_error("parse_csv: malformed row in " + path);
    SweepRow row;
    row.snr_db = std::strtod(fields[0].c_str(), nullptr);
    row.detector = fields[1];
    row.metric = fields[2];
    row.value = std::strtod(fields[3].c_str(), nullptr);
    row.num = parse_u64("num", fields[4]);
    row.den = parse_u64("den", fields[5]);
    row.seed = parse_u64("seed", fields[6]);
    res.rows.push_back(std::move(row));
  }
  return res;
}

}  // namespace obml
