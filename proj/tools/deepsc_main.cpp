#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deepsc/errors.hpp"
#include "deepsc/harness.hpp"

namespace fs = std::filesystem;
using namespace deepsc;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string checkpoint;
  std::string snr_grid;
  std::string channel;
  std::string pesq_cmd;
  std::int64_t seed = -1;
  std::vector<std::string> sets;  // section.key=value overrides
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file (key=value sections)");
  cmd->add_option("--seed", opts.seed, "master seed override");
  cmd->add_option("--out-dir", opts.out_dir, "output directory override");
  cmd->add_option("--checkpoint", opts.checkpoint, "model checkpoint path");
  cmd->add_option("--snr-grid", opts.snr_grid, "evaluation grid, lo:step:hi or comma list");
  cmd->add_option("--channel", opts.channel, "training channel family (awgn|rayleigh|rician)");
  cmd->add_option("--pesq-cmd", opts.pesq_cmd, "external PESQ scorer command");
  cmd->add_option("--set", opts.sets, "override any config key as section.key=value")
      ->take_all();
}

ExperimentConfig build_config(const CommonOpts& opts) {
  ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = load_config(opts.config_path);
  for (const auto& kv : opts.sets) {
    const auto eq = kv.find('=');
    const auto dot = kv.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    }
    apply_config_line(cfg, kv.substr(0, dot), kv.substr(dot + 1, eq - dot - 1),
                      kv.substr(eq + 1));
  }
  if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (!opts.snr_grid.empty()) cfg.eval.snr_grid = parse_snr_grid(opts.snr_grid);
  if (!opts.channel.empty()) cfg.train.channel = channel_family_from_string(opts.channel);
  if (!opts.pesq_cmd.empty()) cfg.pesq_cmd = opts.pesq_cmd;
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  return cfg;
}

void emit_report(const ExperimentConfig& cfg, const EvalReport& report) {
  write_results_csv((fs::path(cfg.out_dir) / "results.csv").string(), report);
  write_summary((fs::path(cfg.out_dir) / "summary.txt").string(), report);
  write_run_meta((fs::path(cfg.out_dir) / "run_meta.txt").string(), report);
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "results.csv").string() << " ("
            << report.rows.size() << " rows)\n";
}

int run_train(const CommonOpts& opts) {
  const ExperimentConfig cfg = build_config(opts);
  const std::string ckpt =
      opts.checkpoint.empty()
          ? (fs::path(cfg.out_dir) / ("model_" + to_string(cfg.train.channel) + ".ckpt")).string()
          : opts.checkpoint;
  const TrainResult result = train(cfg, cfg.train.channel, ckpt);
  write_loss_curve_csv((fs::path(cfg.out_dir) / "loss_curve.csv").string(), result);
  std::cout << "trained " << result.epochs_run << " epochs, initial loss "
            << result.initial_loss << ", best epoch loss " << result.best_loss << "\n"
            << "checkpoint: " << ckpt << "\n";
  return 0;
}

int run_eval(const CommonOpts& opts) {
  const ExperimentConfig cfg = build_config(opts);
  if (opts.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  EvalReport report =
      evaluate_checkpoint(cfg, opts.checkpoint, to_string(cfg.train.channel));
  if (cfg.baseline) {
    report = merge_reports({report, run_baseline(cfg)});
  }
  emit_report(cfg, report);
  return 0;
}

int run_baseline_cmd(const CommonOpts& opts) {
  const ExperimentConfig cfg = build_config(opts);
  emit_report(cfg, run_baseline(cfg));
  return 0;
}

int run_cross_train(const CommonOpts& opts) {
  const ExperimentConfig cfg = build_config(opts);
  EvalReport report = cross_train_experiment(cfg);
  if (cfg.baseline) {
    report = merge_reports({report, run_baseline(cfg)});
  }
  emit_report(cfg, report);
  return 0;
}

int run_report(const CommonOpts& opts, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ConfigError("report: need at least one results csv");
  ExperimentConfig cfg;
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  fs::create_directories(cfg.out_dir);
  std::vector<EvalReport> reports;
  for (const auto& p : inputs) reports.push_back(read_results_csv(p));
  const EvalReport merged = merge_reports(reports);
  emit_report(cfg, merged);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepSC-S: semantic speech transceiver and classical telephony baseline"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::vector<std::string> report_inputs;
  int synth_clips = 16;
  int synth_samples = 16384;
  int synth_rate = 8000;

  auto* cmd_train = app.add_subcommand("train", "train a model per the config");
  add_common(cmd_train, opts);
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint over the channel/SNR grid");
  add_common(cmd_eval, opts);
  auto* cmd_base = app.add_subcommand("baseline", "run the classical chain over the grid");
  add_common(cmd_base, opts);
  auto* cmd_cross = app.add_subcommand("cross-train", "3x3 train/test channel experiment");
  add_common(cmd_cross, opts);
  auto* cmd_report = app.add_subcommand("report", "merge results CSVs and write a summary");
  add_common(cmd_report, opts);
  cmd_report->add_option("inputs", report_inputs, "results.csv files to merge");
  auto* cmd_synth = app.add_subcommand("synth-dataset", "write a deterministic synthetic dataset");
  add_common(cmd_synth, opts);
  cmd_synth->add_option("--clips", synth_clips, "number of clips");
  cmd_synth->add_option("--samples", synth_samples, "samples per clip");
  cmd_synth->add_option("--rate", synth_rate, "sample rate (8000 or 16000)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_train->parsed()) return run_train(opts);
    if (cmd_eval->parsed()) return run_eval(opts);
    if (cmd_base->parsed()) return run_baseline_cmd(opts);
    if (cmd_cross->parsed()) return run_cross_train(opts);
    if (cmd_report->parsed()) return run_report(opts, report_inputs);
    if (cmd_synth->parsed()) {
      const std::string dir = opts.out_dir.empty() ? "synth_data" : opts.out_dir;
      const std::uint64_t seed = opts.seed >= 0 ? static_cast<std::uint64_t>(opts.seed) : 1;
      write_synth_dataset(dir, synth_clips, synth_samples, synth_rate, seed);
      std::cout << "wrote " << synth_clips << " clips to " << dir << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DatasetError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
