#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "obml/coding.hpp"
#include "obml/detectors.hpp"
#include "obml/harness.hpp"
#include "obml/likelihood.hpp"
#include "obml/numerics.hpp"
#include "obml/signal_model.hpp"
#include "obml/snr_estimator.hpp"

namespace py = pybind11;
using namespace obml;

namespace {

std::vector<std::vector<double>> matrix_to_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows[r].assign(m.row(r).begin(), m.row(r).end());
  }
  return rows;
}

Observation make_observation(const std::vector<int>& signs) {
  Observation y;
  y.signs.reserve(signs.size());
  for (int s : signs) {
    if (s != 1 && s != -1) throw std::invalid_argument("observation entries must be +1 or -1");
    y.signs.push_back(static_cast<std::int8_t>(s));
  }
  return y;
}

std::vector<int> observation_to_list(const Observation& y) {
  return std::vector<int>(y.signs.begin(), y.signs.end());
}

}  // namespace

PYBIND11_MODULE(_obml, m) {
  m.doc() = "learning-based maximum-likelihood detection for one-bit massive MIMO";

  // numerics
  m.def("std_normal_cdf", &std_normal_cdf, py::arg("x"));
  m.def("std_normal_cdf_inv", &std_normal_cdf_inv, py::arg("p"));
  m.def("log_std_normal_cdf", &log_std_normal_cdf, py::arg("x"));

  py::class_<RngStream>(m, "RngStream")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream_id"))
      .def("next_u64", &RngStream::next_u64)
      .def("next_unit", &RngStream::next_unit)
      .def("next_gaussian", &RngStream::next_gaussian)
      .def("gaussian", &RngStream::gaussian, py::arg("mean"), py::arg("variance"));
  m.def("sample_gaussian", &sample_gaussian, py::arg("mean"), py::arg("variance"), py::arg("rng"));

  // signal model
  py::class_<LinkParams>(m, "LinkParams")
      .def(py::init<>())
      .def_readwrite("rho", &LinkParams::rho)
      .def_readwrite("n0", &LinkParams::n0)
      .def("snr_db", &LinkParams::snr_db)
      .def("snr_linear", &LinkParams::snr_linear)
      .def_static("from_snr_db", &LinkParams::from_snr_db, py::arg("snr_db"),
                  py::arg("rho") = 1.0);

  py::class_<ComplexChannel>(m, "ComplexChannel")
      .def_readonly("num_users", &ComplexChannel::num_users)
      .def_readonly("num_antennas", &ComplexChannel::num_antennas)
      .def_readonly("entries", &ComplexChannel::entries);

  py::class_<RealChannel>(m, "RealChannel")
      .def_readonly("num_users", &RealChannel::num_users)
      .def_readonly("num_antennas", &RealChannel::num_antennas)
      .def_property_readonly("rows", [](const RealChannel& h) { return matrix_to_rows(h.h); })
      .def("apply_transpose", [](const RealChannel& h, const std::vector<double>& x) {
        std::vector<double> out(h.real_ports());
        h.apply_transpose(x, out);
        return out;
      });

  py::class_<SymbolTable>(m, "SymbolTable")
      .def_property_readonly("order", &SymbolTable::order)
      .def_property_readonly("bits_per_symbol", &SymbolTable::bits_per_symbol)
      .def_property_readonly("num_users", &SymbolTable::num_users)
      .def_property_readonly("count", &SymbolTable::count)
      .def_property_readonly("constellation", &SymbolTable::constellation)
      .def("real_vector",
           [](const SymbolTable& t, std::size_t k) {
             auto row = t.real_vector(k);
             return std::vector<double>(row.begin(), row.end());
           })
      .def("label", &SymbolTable::label, py::arg("k"), py::arg("user"))
      .def("label_bit", &SymbolTable::label_bit, py::arg("label"), py::arg("pos"))
      .def("index_of_labels", [](const SymbolTable& t, const std::vector<int>& labels) {
        return t.index_of_labels(labels);
      });

  m.def("build_symbol_table", &build_symbol_table, py::arg("m_order"), py::arg("num_users"));
  m.def("gen_rayleigh_channel", &gen_rayleigh_channel, py::arg("num_users"),
        py::arg("num_antennas"), py::arg("rng"));
  m.def("lift_channel", &lift_channel, py::arg("channel"));
  m.def(
      "transmit",
      [](const RealChannel& h, const std::vector<double>& x, const LinkParams& p, RngStream& rng) {
        return transmit(h, x, p, rng);
      },
      py::arg("channel"), py::arg("x"), py::arg("params"), py::arg("rng"));
  m.def("one_bit_quantize", [](const std::vector<double>& r) {
    return observation_to_list(one_bit_quantize(r));
  });
  m.def(
      "dithered_observation",
      [](const RealChannel& h, const std::vector<double>& s, const LinkParams& p,
         const std::vector<double>& sigma2, RngStream& rng) {
        return observation_to_list(dithered_observation(h, s, p, sigma2, rng));
      },
      py::arg("channel"), py::arg("s"), py::arg("params"), py::arg("sigma2"), py::arg("rng"));

  // likelihood learning
  py::class_<LikelihoodTable>(m, "LikelihoodTable")
      .def_property_readonly("count", &LikelihoodTable::count)
      .def_property_readonly("ports", &LikelihoodTable::ports)
      .def_property_readonly("training_length", &LikelihoodTable::training_length)
      .def_property_readonly("finalized", &LikelihoodTable::finalized)
      .def("p_plus", py::overload_cast<std::size_t, std::size_t>(&LikelihoodTable::p_plus,
                                                                 py::const_))
      .def("save", &LikelihoodTable::save, py::arg("path"))
      .def_static("load", &LikelihoodTable::load, py::arg("path"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("n_tr", &TrainConfig::n_tr)
      .def_readwrite("n_s", &TrainConfig::n_s)
      .def_readwrite("sigma2_init", &TrainConfig::sigma2_init)
      .def_readwrite("delta", &TrainConfig::delta)
      .def_readwrite("record_sigma_path", &TrainConfig::record_sigma_path);

  py::class_<DitherTrace>(m, "DitherTrace")
      .def_readonly("undertrained_per_k", &DitherTrace::undertrained_per_k)
      .def_readonly("fallback_rows", &DitherTrace::fallback_rows)
      .def_property_readonly("final_sigma2",
                             [](const DitherTrace& t) { return matrix_to_rows(t.final_sigma2); });

  py::class_<AdlResult>(m, "AdlResult")
      .def_readonly("table", &AdlResult::table)
      .def_readonly("trace", &AdlResult::trace)
      .def_property_readonly(
          "psi_hat", [](const AdlResult& r) { return matrix_to_rows(r.outputs.psi_hat); });

  m.def("empirical_sign_prob", [](const std::vector<int>& signs) {
    std::vector<std::int8_t> s(signs.begin(), signs.end());
    return empirical_sign_prob(s);
  });
  m.def("denoise", &denoise, py::arg("p_dithered"), py::arg("sigma2_i"), py::arg("n0"));
  m.def(
      "naive_learn",
      [](const std::vector<std::vector<std::vector<int>>>& groups, std::size_t n_tr) {
        std::vector<std::vector<Observation>> obs(groups.size());
        for (std::size_t k = 0; k < groups.size(); ++k) {
          for (const auto& g : groups[k]) obs[k].push_back(make_observation(g));
        }
        return naive_learn(obs, n_tr);
      },
      py::arg("pilot_groups"), py::arg("n_tr"));
  m.def(
      "adl_train",
      [](const std::function<std::vector<int>(std::size_t, std::vector<double>)>& source,
         std::size_t count, std::size_t ports, const TrainConfig& cfg, const LinkParams& params) {
        DitherPilotSource src = [&](std::size_t k, std::span<const double> sigma2) {
          return make_observation(source(k, std::vector<double>(sigma2.begin(), sigma2.end())));
        };
        return adl_train(src, count, ports, cfg, params);
      },
      py::arg("source"), py::arg("count"), py::arg("ports"), py::arg("cfg"), py::arg("params"));
  m.def("finalize_floor",
        [](const LikelihoodTable& t) { return finalize_floor(t, nullptr); });
  m.def("count_undertrained", &count_undertrained, py::arg("table"));

  // detectors
  py::class_<DetectionResult>(m, "DetectionResult")
      .def_readonly("k_star", &DetectionResult::k_star)
      .def_readonly("log_likelihood", &DetectionResult::log_likelihood)
      .def_readonly("user_symbols", &DetectionResult::user_symbols)
      .def_readonly("valid", &DetectionResult::valid);

  m.def(
      "ml_detect_csi",
      [](const std::vector<int>& y, const RealChannel& h, const LinkParams& p,
         const SymbolTable& t) { return ml_detect_csi(make_observation(y), h, p, t); },
      py::arg("y"), py::arg("channel"), py::arg("params"), py::arg("symbols"));
  m.def(
      "ml_detect_learned",
      [](const std::vector<int>& y, const LikelihoodTable& table) {
        return ml_detect_learned(make_observation(y), table);
      },
      py::arg("y"), py::arg("table"));
  m.def(
      "zf_detect",
      [](const std::vector<int>& y, const RealChannel& h, const LinkParams& p,
         const SymbolTable& t) { return zf_detect(make_observation(y), h, p, t); },
      py::arg("y"), py::arg("channel"), py::arg("params"), py::arg("symbols"));
  m.def(
      "ml_detect_unquantized",
      [](const std::vector<double>& r, const RealChannel& h, const LinkParams& p,
         const SymbolTable& t) { return ml_detect_unquantized(r, h, p, t); },
      py::arg("r"), py::arg("channel"), py::arg("params"), py::arg("symbols"));

  // coding
  py::class_<PolarCode>(m, "PolarCode")
      .def_readonly("block_length", &PolarCode::block_length)
      .def_readonly("message_length", &PolarCode::message_length)
      .def_readonly("list_size", &PolarCode::list_size)
      .def_readonly("frozen_set", &PolarCode::frozen_set);

  m.def("polar_construct", &polar_construct, py::arg("block_length"), py::arg("message_length"),
        py::arg("design_snr_db"), py::arg("list_size") = 8);
  m.def(
      "polar_encode",
      [](const std::vector<std::uint8_t>& msg, const PolarCode& code) {
        return polar_encode(msg, code);
      },
      py::arg("message"), py::arg("code"));
  m.def(
      "scl_decode",
      [](const std::vector<double>& llrs, const PolarCode& code) {
        return scl_decode(llrs, code);
      },
      py::arg("llrs"), py::arg("code"));
  m.def("save_frozen_set", &save_frozen_set, py::arg("code"), py::arg("path"));
  m.def("load_frozen_set", &load_frozen_set, py::arg("path"), py::arg("list_size") = 8);

  py::class_<BitSubsets>(m, "BitSubsets")
      .def("bit", &BitSubsets::bit, py::arg("user"), py::arg("pos"), py::arg("k"))
      .def("subset", &BitSubsets::set, py::arg("user"), py::arg("pos"), py::arg("b"));
  m.def("build_bit_subsets", &build_bit_subsets, py::arg("symbols"));
  m.def(
      "compute_llr",
      [](const std::vector<int>& y, const LikelihoodTable& table, const BitSubsets& subsets) {
        return matrix_to_rows(compute_llr(make_observation(y), table, subsets));
      },
      py::arg("y"), py::arg("table"), py::arg("subsets"));
  m.def(
      "assemble_frame",
      [](const std::vector<std::vector<std::uint8_t>>& messages, const PolarCode& code,
         const SymbolTable& symbols) {
        return matrix_to_rows(assemble_frame(messages, code, symbols));
      },
      py::arg("messages"), py::arg("code"), py::arg("symbols"));

  // snr estimator
  py::class_<MlpModel>(m, "MlpModel")
      .def("forward",
           [](const MlpModel& m_, const std::vector<double>& x) { return m_.forward(x); })
      .def("save", &MlpModel::save, py::arg("path"))
      .def_static("load", &MlpModel::load, py::arg("path"));
  m.def(
      "estimate_snr",
      [](const std::vector<std::vector<int>>& window, const MlpModel& model) {
        std::vector<Observation> obs;
        obs.reserve(window.size());
        for (const auto& w : window) obs.push_back(make_observation(w));
        return estimate_snr(obs, model);
      },
      py::arg("window"), py::arg("model"));

  // harness
  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_static("from_file", &SimConfig::from_file, py::arg("path"))
      .def_static("from_kv",
                  [](const std::map<std::string, std::string>& kv) { return SimConfig::from_kv(kv); })
      .def_readwrite("nu", &SimConfig::nu)
      .def_readwrite("nr", &SimConfig::nr)
      .def_readwrite("m_order", &SimConfig::m_order)
      .def_readwrite("snr_grid_db", &SimConfig::snr_grid_db)
      .def_readwrite("n_tr", &SimConfig::n_tr)
      .def_readwrite("n_s", &SimConfig::n_s)
      .def_readwrite("sigma2_init", &SimConfig::sigma2_init)
      .def_readwrite("delta", &SimConfig::delta)
      .def_readwrite("detectors", &SimConfig::detectors)
      .def_readwrite("min_error_events", &SimConfig::min_error_events)
      .def_readwrite("max_trials", &SimConfig::max_trials)
      .def_readwrite("data_per_block", &SimConfig::data_per_block)
      .def_readwrite("coding", &SimConfig::coding)
      .def_readwrite("eta", &SimConfig::eta)
      .def_readwrite("kappa", &SimConfig::kappa)
      .def_readwrite("list_size", &SimConfig::list_size)
      .def_readwrite("frames_per_block", &SimConfig::frames_per_block)
      .def_readwrite("channel_draws", &SimConfig::channel_draws)
      .def_readwrite("est_window", &SimConfig::est_window)
      .def_readwrite("est_snr_grid_db", &SimConfig::est_snr_grid_db)
      .def_readwrite("est_samples_per_snr", &SimConfig::est_samples_per_snr)
      .def_readwrite("est_features", &SimConfig::est_features)
      .def_readwrite("est_hidden", &SimConfig::est_hidden)
      .def_readwrite("est_epochs", &SimConfig::est_epochs)
      .def_readwrite("est_batch", &SimConfig::est_batch)
      .def_readwrite("est_lr", &SimConfig::est_lr)
      .def_readwrite("seed", &SimConfig::seed)
      .def_readwrite("threads", &SimConfig::threads);

  py::class_<SweepRow>(m, "SweepRow")
      .def_readonly("snr_db", &SweepRow::snr_db)
      .def_readonly("detector", &SweepRow::detector)
      .def_readonly("metric", &SweepRow::metric)
      .def_readonly("value", &SweepRow::value)
      .def_readonly("num", &SweepRow::num)
      .def_readonly("den", &SweepRow::den)
      .def_readonly("seed", &SweepRow::seed);

  py::class_<SweepResult>(m, "SweepResult").def_readonly("rows", &SweepResult::rows);

  py::class_<SnrTrainReport>(m, "SnrTrainReport")
      .def_readonly("train_rmse", &SnrTrainReport::train_rmse)
      .def_readonly("validation_rmse", &SnrTrainReport::validation_rmse)
      .def_readonly("label_std", &SnrTrainReport::label_std);
  m.def(
      "train_snr_model",
      [](const SimConfig& cfg) {
        SnrTrainReport report;
        MlpModel model;
        {
          py::gil_scoped_release release;
          model = train_snr_model(cfg, &report);
        }
        return py::make_tuple(std::move(model), report);
      },
      py::arg("config"));

  m.def("run_ser_sweep", &run_ser_sweep, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_fer_sweep", &run_fer_sweep, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_undertrained_sweep", &run_undertrained_sweep, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("emit_csv", &emit_csv, py::arg("result"), py::arg("path"));
  m.def("parse_csv", &parse_csv, py::arg("path"));
}
