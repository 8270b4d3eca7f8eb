#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepsc/channel.hpp"
#include "deepsc/model.hpp"
#include "deepsc/speech.hpp"

namespace deepsc {

struct TrainSettings {
  ChannelFamily channel = ChannelFamily::Rician;
  double snr_db = 8.0;          // fixed training SNR
  double rician_k = 1.0;
  float lr = 0.001f;
  int batch = 4;
  int max_epochs = 200;
  int patience = 5;             // early stop on epoch-mean loss
  double min_delta = 1e-7;
  bool redraw_channel = true;   // false pins one realization for every step
};

struct EvalSettings {
  std::vector<ChannelFamily> channels{ChannelFamily::AWGN, ChannelFamily::Rayleigh,
                                      ChannelFamily::Rician};
  // brackets the visible range of the reference experiment grids
  std::vector<double> snr_grid{-4, -2, 0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  int trials = 4;
  double rician_k = 1.0;
};

struct ExperimentConfig {
  std::string train_dir, test_dir;
  std::string train_manifest, test_manifest;
  ModelHyper hyper;
  TrainSettings train;
  EvalSettings eval;
  bool baseline = true;
  bool equalize = true;
  std::string out_dir = "out";
  std::string pesq_cmd;
  std::uint64_t seed = 1;

  int W() const { return hyper.F * hyper.L; }
  void validate() const;
  std::uint64_t hash() const;
};

// Flat key=value file with [section] headers; unknown keys are rejected.
ExperimentConfig load_config(const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& section,
                       const std::string& key, const std::string& value);
std::string serialize_config(const ExperimentConfig& cfg);

// "-4:2:20" (lo:step:hi) or a comma list "0,4,8".
std::vector<double> parse_snr_grid(const std::string& text);

struct EvalRow {
  std::string system;         // "deepsc-s" or "baseline"
  std::string train_channel;  // family name, or "none" for the baseline
  std::string test_channel;
  double snr_db = 0.0;
  double mse = 0.0;
  double sdr_db = 0.0;        // +inf allowed
  double segsnr_db = 0.0;
  std::optional<double> pesq;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::string build_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::int64_t deepsc_symbols_per_clip = 0;
  std::int64_t baseline_symbols_per_clip = 0;
};

struct TrainResult {
  std::string checkpoint_path;
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int epochs_run = 0;
};

// Algorithm: frame -> encode -> channel at the fixed SNR -> decode -> MSE ->
// simultaneous SGD update; stops on the early-stop rule or max_epochs.
TrainResult train(const ExperimentConfig& cfg, ChannelFamily family,
                  const std::string& checkpoint_path);

// Frozen-model sweep over (channel family x SNR grid); pooled metrics per cell.
EvalReport evaluate(const ExperimentConfig& cfg, const DeepSCSModel& model,
                    const std::string& train_channel_label);
EvalReport evaluate_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                               const std::string& train_channel_label);

// Classical chain over the same grid.
EvalReport run_baseline(const ExperimentConfig& cfg);

// Trains one model per channel family at the fixed SNR, evaluates each under
// all families. Returns the merged 3x3 report.
EvalReport cross_train_experiment(const ExperimentConfig& cfg);

EvalReport merge_reports(const std::vector<EvalReport>& reports);

void write_results_csv(const std::string& path, const EvalReport& report);
EvalReport read_results_csv(const std::string& path);  // strict parser
void write_loss_curve_csv(const std::string& path, const TrainResult& result);
void write_summary(const std::string& path, const EvalReport& report);
void write_run_meta(const std::string& path, const EvalReport& report);

// Deterministic speech-like test signal (harmonic stack with syllabic
// amplitude modulation plus a little noise).
SpeechClip make_synth_clip(std::uint64_t seed, int n_samples, int sample_rate_hz);
void write_synth_dataset(const std::string& dir, int n_clips, int n_samples,
                         int sample_rate_hz, std::uint64_t seed);

inline constexpr const char* kBuildId = "deepsc-s/1.0.0";

}  // namespace deepsc
