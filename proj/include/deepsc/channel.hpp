#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepsc/tensor.hpp"

namespace deepsc {

enum class ChannelFamily { AWGN, Rayleigh, Rician };

ChannelFamily channel_family_from_string(const std::string& name);
std::string to_string(ChannelFamily family);

enum class FadingGranularity { PerClip, PerSymbol };

struct ChannelSpec {
  ChannelFamily family = ChannelFamily::AWGN;
  double snr_db = 8.0;       // may be +inf for the noiseless limit
  double rician_k = 1.0;     // linear K-factor, used only for Rician
  FadingGranularity fading_granularity = FadingGranularity::PerClip;
  std::uint64_t seed = 0;
};

// One sampled channel event. h has B entries (per clip) or B*S (per symbol);
// noise always has B*S complex entries; sigma2 = 10^(-snr_db/10).
struct ChannelRealization {
  std::vector<float> h_re, h_im;
  std::vector<float> noise_re, noise_im;
  double sigma2 = 0.0;
  bool per_symbol = false;
  int batch = 0;
  std::int64_t symbols_per_item = 0;
};

// Draws h and w for a batch of B items with S symbols each. Deterministic in
// the rng stream; the two-argument form seeds from spec.seed.
ChannelRealization sample_channel(const ChannelSpec& spec, int batch, std::int64_t symbols,
                                  Rng& rng);
ChannelRealization sample_channel(const ChannelSpec& spec, int batch, std::int64_t symbols);

// y = h*x + w on plain interleaved re/im arrays (baseline path).
void apply_channel(const ChannelRealization& real, std::span<const float> x_interleaved,
                   std::span<float> y_interleaved);

// Zero-forcing y/h with |h| clamped at 1e-12; flagged symbol count returned.
// AWGN realizations are a no-op copy.
std::int64_t equalize_inplace(const ChannelRealization& real, std::span<float> y_interleaved);

// Differentiable path: X is [B,S,2]; h, w enter the graph as constants.
Tensor transmit(const Tensor& x, const ChannelRealization& real);
Tensor equalize(const Tensor& y, const ChannelRealization& real);

// MMSE symbol estimate conj(h)*y / (|h|^2 + sigma^2). Unlike zero forcing the
// gain is bounded in deep fades, which keeps the training loss finite under
// per-clip Rayleigh draws; at sigma = 0 it coincides with equalize().
Tensor mmse_combine(const Tensor& y, const ChannelRealization& real);

// 10*log10(||hX||^2 / ||Y - hX||^2); +inf when the noise term vanishes.
double measure_snr_db(std::span<const float> x_interleaved, std::span<const float> y_interleaved,
                      const ChannelRealization& real);

}  // namespace deepsc
