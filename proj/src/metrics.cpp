#include "deepsc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "deepsc/errors.hpp"

namespace deepsc {

double mse(std::span<const float> ref, std::span<const float> deg) {
  if (ref.size() != deg.size()) throw ShapeError("mse: length mismatch");
  if (ref.empty()) throw ContractError("mse: empty signals");
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = static_cast<double>(ref[i]) - deg[i];
    acc += d * d;
  }
  return acc / static_cast<double>(ref.size());
}

double sdr_db(std::span<const float> ref, std::span<const float> deg) {
  if (ref.size() != deg.size()) throw ShapeError("sdr: length mismatch");
  double sig = 0.0, dist = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    sig += static_cast<double>(ref[i]) * ref[i];
    const double d = static_cast<double>(ref[i]) - deg[i];
    dist += d * d;
  }
  if (sig == 0.0) throw ContractError("sdr: all-zero reference");
  if (dist == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / dist);
}

double segmental_snr_db(std::span<const float> ref, std::span<const float> deg, int seg_len) {
  if (ref.size() != deg.size()) throw ShapeError("segsnr: length mismatch");
  if (static_cast<int>(ref.size()) < seg_len) throw ContractError("segsnr: signal shorter than segment");
  double acc = 0.0;
  int used = 0;
  const std::size_t n_segs = ref.size() / static_cast<std::size_t>(seg_len);
  for (std::size_t s = 0; s < n_segs; ++s) {
    double sig = 0.0, dist = 0.0;
    for (int i = 0; i < seg_len; ++i) {
      const std::size_t k = s * static_cast<std::size_t>(seg_len) + static_cast<std::size_t>(i);
      sig += static_cast<double>(ref[k]) * ref[k];
      const double d = static_cast<double>(ref[k]) - deg[k];
      dist += d * d;
    }
    if (sig < 1e-8) continue;  // silent segment
    double snr = dist == 0.0 ? 35.0 : 10.0 * std::log10(sig / dist);
    snr = std::clamp(snr, -10.0, 35.0);
    acc += snr;
    ++used;
  }
  if (used == 0) throw ContractError("segsnr: all segments silent");
  return acc / used;
}

std::optional<double> pesq_external(const std::string& ref_wav_path,
                                    const std::string& deg_wav_path,
                                    const std::string& scorer_command) {
  if (scorer_command.empty()) return std::nullopt;
  const std::string cmd = scorer_command + " '" + ref_wav_path + "' '" + deg_wav_path + "'";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) throw ScorerError("pesq: cannot launch scorer: " + scorer_command);
  std::string output;
  char buf[256];
  while (fgets(buf, sizeof(buf), pipe) != nullptr) output += buf;
  const int status = pclose(pipe);
  if (status != 0) throw ScorerError("pesq: scorer exited with status " + std::to_string(status));
  std::istringstream is(output);
  double score = 0.0;
  if (!(is >> score)) throw ScorerError("pesq: cannot parse scorer output: '" + output + "'");
  if (score < -0.5 || score > 4.5) {
    throw ScorerError("pesq: score " + std::to_string(score) + " outside [-0.5, 4.5]");
  }
  return score;
}

}  // namespace deepsc
