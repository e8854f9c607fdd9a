#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "obml/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_path;
  std::string snr_model;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t threads = 0;
  bool threads_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required) {
  cmd->add_option("--config", args.config_path, "simulation config file (key = value)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", args.out_path, "output path");
  if (out_required) out->required();
  cmd->add_option("--seed", args.seed, "override the config seed")
      ->each([&](const std::string&) { args.seed_set = true; });
  cmd->add_option("--threads", args.threads, "worker threads (0 = hardware)")
      ->each([&](const std::string&) { args.threads_set = true; });
  cmd->add_option("--snr-model", args.snr_model,
                  "perfect or estimated:<weights path>; overrides the config");
}

obml::SimConfig load_config(const CommonArgs& args) {
  obml::SimConfig cfg = obml::SimConfig::from_file(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (args.threads_set) cfg.threads = args.threads;
  if (!args.snr_model.empty()) {
    if (args.snr_model == "perfect") {
      cfg.snr_model = obml::SnrModelMode::perfect;
      cfg.snr_model_path.clear();
    } else if (args.snr_model.rfind("estimated:", 0) == 0) {
      cfg.snr_model = obml::SnrModelMode::estimated;
      cfg.snr_model_path = args.snr_model.substr(10);
    } else {
      throw CLI::ValidationError("--snr-model must be perfect or estimated:<path>");
    }
  }
  cfg.validate();
  return cfg;
}

void report(const obml::SweepResult& result) {
  for (const auto& row : result.rows) {
    std::printf("%8s dB  %-16s %-17s %.6g  (%llu/%llu)\n",
                obml::format_double_exact(row.snr_db).c_str(), row.detector.c_str(),
                row.metric.c_str(), row.value, static_cast<unsigned long long>(row.num),
                static_cast<unsigned long long>(row.den));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"one-bit massive MIMO learning-based detection simulator"};
  app.require_subcommand(1);

  CommonArgs ser_args, fer_args, ut_args, snr_args;
  auto* ser = app.add_subcommand("ser", "uncoded symbol error rate sweep");
  add_common(ser, ser_args, false);
  auto* fer = app.add_subcommand("fer", "channel-coded frame error rate sweep");
  add_common(fer, fer_args, false);
  auto* ut = app.add_subcommand("undertrained", "mean under-trained likelihood counts");
  add_common(ut, ut_args, false);
  auto* snr = app.add_subcommand("train-snr", "train the offline SNR estimator");
  add_common(snr, snr_args, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ser->parsed()) {
      const auto cfg = load_config(ser_args);
      const auto result = obml::run_ser_sweep(cfg);
      report(result);
      if (!ser_args.out_path.empty()) obml::emit_csv(result, ser_args.out_path);
    } else if (fer->parsed()) {
      const auto cfg = load_config(fer_args);
      const auto result = obml::run_fer_sweep(cfg);
      report(result);
      if (!fer_args.out_path.empty()) obml::emit_csv(result, fer_args.out_path);
    } else if (ut->parsed()) {
      const auto cfg = load_config(ut_args);
      const auto result = obml::run_undertrained_sweep(cfg);
      report(result);
      if (!ut_args.out_path.empty()) obml::emit_csv(result, ut_args.out_path);
    } else if (snr->parsed()) {
      const auto cfg = load_config(snr_args);
      obml::SnrTrainReport rep;
      const obml::MlpModel model = obml::train_snr_model(cfg, &rep);
      model.save(snr_args.out_path);
      std::printf("train rmse %.3f dB, validation rmse %.3f dB, label std %.3f dB\n",
                  rep.train_rmse, rep.validation_rmse, rep.label_std);
      std::printf("weights written to %s\n", snr_args.out_path.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
