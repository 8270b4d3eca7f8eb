#pragma once

#include <optional>
#include <span>
#include <string>

namespace deepsc {

struct QualityScore {
  double mse = 0.0;
  double sdr_db = 0.0;  // may be +inf
  std::optional<double> pesq;  // in [-0.5, 4.5] when present
  double proxy_segsnr_db = 0.0;
};

// (1/W) sum (s - s_hat)^2
double mse(std::span<const float> ref, std::span<const float> deg);

// 10*log10(||s||^2 / ||s - s_hat||^2); +inf sentinel on exact recovery.
double sdr_db(std::span<const float> ref, std::span<const float> deg);

// Mean over segments of the per-segment SNR, clamped to [-10, 35] dB; silent
// segments (energy < 1e-8) are skipped. PESQ stand-in, never reported as PESQ.
double segmental_snr_db(std::span<const float> ref, std::span<const float> deg,
                        int seg_len = 256);

// Runs `<command> <ref.wav> <deg.wav>` and parses one real from stdout.
// Empty command -> nullopt (metric absent, not an error).
std::optional<double> pesq_external(const std::string& ref_wav_path,
                                    const std::string& deg_wav_path,
                                    const std::string& scorer_command);

}  // namespace deepsc
