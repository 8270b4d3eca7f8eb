#include "deepsc/channel.hpp"

#include <cmath>
#include <limits>

#include "deepsc/errors.hpp"

namespace deepsc {

ChannelFamily channel_family_from_string(const std::string& name) {
  if (name == "awgn" || name == "AWGN") return ChannelFamily::AWGN;
  if (name == "rayleigh" || name == "Rayleigh") return ChannelFamily::Rayleigh;
  if (name == "rician" || name == "Rician") return ChannelFamily::Rician;
  throw ConfigError("unknown channel family: " + name);
}

std::string to_string(ChannelFamily family) {
  switch (family) {
    case ChannelFamily::AWGN: return "awgn";
    case ChannelFamily::Rayleigh: return "rayleigh";
    case ChannelFamily::Rician: return "rician";
  }
  return "?";
}

ChannelRealization sample_channel(const ChannelSpec& spec, int batch, std::int64_t symbols,
                                  Rng& rng) {
  if (!(spec.snr_db == spec.snr_db)) throw ConfigError("channel: snr_db is NaN");
  ChannelRealization real;
  real.batch = batch;
  real.symbols_per_item = symbols;
  real.per_symbol = spec.fading_granularity == FadingGranularity::PerSymbol;
  real.sigma2 = std::isinf(spec.snr_db) ? 0.0 : std::pow(10.0, -spec.snr_db / 10.0);

  const std::int64_t n_h =
      real.per_symbol ? static_cast<std::int64_t>(batch) * symbols : batch;
  real.h_re.resize(static_cast<std::size_t>(n_h));
  real.h_im.resize(static_cast<std::size_t>(n_h));
  switch (spec.family) {
    case ChannelFamily::AWGN:
      for (std::int64_t i = 0; i < n_h; ++i) {
        real.h_re[static_cast<std::size_t>(i)] = 1.0f;
        real.h_im[static_cast<std::size_t>(i)] = 0.0f;
      }
      break;
    case ChannelFamily::Rayleigh:
      // h ~ CN(0,1): each component N(0, 1/2)
      for (std::int64_t i = 0; i < n_h; ++i) {
        real.h_re[static_cast<std::size_t>(i)] = static_cast<float>(rng.normal() * std::numbers::sqrt2 / 2.0);
        real.h_im[static_cast<std::size_t>(i)] = static_cast<float>(rng.normal() * std::numbers::sqrt2 / 2.0);
      }
      break;
    case ChannelFamily::Rician: {
      if (spec.rician_k < 0.0) throw ConfigError("channel: rician_k must be >= 0");
      const double los = std::sqrt(spec.rician_k / (spec.rician_k + 1.0));
      const double scatter = std::sqrt(1.0 / (spec.rician_k + 1.0));
      for (std::int64_t i = 0; i < n_h; ++i) {
        real.h_re[static_cast<std::size_t>(i)] =
            static_cast<float>(los + scatter * rng.normal() / std::numbers::sqrt2);
        real.h_im[static_cast<std::size_t>(i)] =
            static_cast<float>(scatter * rng.normal() / std::numbers::sqrt2);
      }
      break;
    }
  }

  const std::int64_t n_w = static_cast<std::int64_t>(batch) * symbols;
  real.noise_re.resize(static_cast<std::size_t>(n_w));
  real.noise_im.resize(static_cast<std::size_t>(n_w));
  const double comp_sigma = std::sqrt(real.sigma2 / 2.0);  // sigma^2 split over re/im
  for (std::int64_t i = 0; i < n_w; ++i) {
    real.noise_re[static_cast<std::size_t>(i)] = static_cast<float>(comp_sigma * rng.normal());
    real.noise_im[static_cast<std::size_t>(i)] = static_cast<float>(comp_sigma * rng.normal());
  }
  return real;
}

ChannelRealization sample_channel(const ChannelSpec& spec, int batch, std::int64_t symbols) {
  Rng rng(spec.seed);
  return sample_channel(spec, batch, symbols, rng);
}

namespace {

inline std::size_t h_index(const ChannelRealization& real, std::int64_t flat_symbol) {
  return static_cast<std::size_t>(real.per_symbol ? flat_symbol
                                              : flat_symbol / real.symbols_per_item);
}

}  // namespace

void apply_channel(const ChannelRealization& real, std::span<const float> x,
                   std::span<float> y) {
  const std::int64_t total = static_cast<std::int64_t>(real.batch) * real.symbols_per_item;
  if (static_cast<std::int64_t>(x.size()) != 2 * total || x.size() != y.size()) {
    throw ShapeError("apply_channel: symbol count mismatch");
  }
  for (std::int64_t i = 0; i < total; ++i) {
    const std::size_t hi = h_index(real, i);
    const float hr = real.h_re[hi], him = real.h_im[hi];
    const float xr = x[static_cast<std::size_t>(2 * i)], xi = x[static_cast<std::size_t>(2 * i + 1)];
    y[static_cast<std::size_t>(2 * i)] = hr * xr - him * xi + real.noise_re[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(2 * i + 1)] = hr * xi + him * xr + real.noise_im[static_cast<std::size_t>(i)];
  }
}

std::int64_t equalize_inplace(const ChannelRealization& real, std::span<float> y) {
  const std::int64_t total = static_cast<std::int64_t>(real.batch) * real.symbols_per_item;
  if (static_cast<std::int64_t>(y.size()) != 2 * total) {
    throw ShapeError("equalize: symbol count mismatch");
  }
  std::int64_t flagged = 0;
  for (std::int64_t i = 0; i < total; ++i) {
    const std::size_t hi = h_index(real, i);
    double hr = real.h_re[hi], him = real.h_im[hi];
    double mag2 = hr * hr + him * him;
    if (mag2 < 1e-24) {  // |h| clamped at 1e-12
      ++flagged;
      const double mag = std::sqrt(mag2);
      const double s = mag > 0.0 ? 1e-12 / mag : 1.0;
      hr = mag > 0.0 ? hr * s : 1e-12;
      him = him * s;
      mag2 = 1e-24;
    }
    const double yr = y[static_cast<std::size_t>(2 * i)], yi = y[static_cast<std::size_t>(2 * i + 1)];
    y[static_cast<std::size_t>(2 * i)] = static_cast<float>((yr * hr + yi * him) / mag2);
    y[static_cast<std::size_t>(2 * i + 1)] = static_cast<float>((yi * hr - yr * him) / mag2);
  }
  return flagged;
}

Tensor transmit(const Tensor& x, const ChannelRealization& real) {
  if (x.rank() != 3 || x.dim(2) != 2) throw ShapeError("transmit: X must be [B,S,2]");
  if (x.dim(0) != real.batch || x.dim(1) != real.symbols_per_item) {
    throw ShapeError("transmit: realization drawn for a different shape");
  }
  return complex_affine(x, real.h_re, real.h_im, real.noise_re, real.noise_im);
}

Tensor equalize(const Tensor& y, const ChannelRealization& real) {
  if (y.rank() != 3 || y.dim(2) != 2) throw ShapeError("equalize: Y must be [B,S,2]");
  if (y.dim(0) != real.batch || y.dim(1) != real.symbols_per_item) {
    throw ShapeError("equalize: realization drawn for a different shape");
  }
  // 1/h with |h| clamped, as in the in-place path.
  std::vector<float> inv_re(real.h_re.size()), inv_im(real.h_im.size());
  for (std::size_t i = 0; i < real.h_re.size(); ++i) {
    double hr = real.h_re[i], him = real.h_im[i];
    double mag2 = hr * hr + him * him;
    if (mag2 < 1e-24) {
      const double mag = std::sqrt(mag2);
      const double s = mag > 0.0 ? 1e-12 / mag : 1.0;
      hr = mag > 0.0 ? hr * s : 1e-12;
      him = him * s;
      mag2 = 1e-24;
    }
    inv_re[i] = static_cast<float>(hr / mag2);
    inv_im[i] = static_cast<float>(-him / mag2);
  }
  return complex_affine(y, inv_re, inv_im, {}, {});
}

Tensor mmse_combine(const Tensor& y, const ChannelRealization& real) {
  if (y.rank() != 3 || y.dim(2) != 2) throw ShapeError("mmse_combine: Y must be [B,S,2]");
  if (y.dim(0) != real.batch || y.dim(1) != real.symbols_per_item) {
    throw ShapeError("mmse_combine: realization drawn for a different shape");
  }
  std::vector<float> c_re(real.h_re.size()), c_im(real.h_im.size());
  for (std::size_t i = 0; i < real.h_re.size(); ++i) {
    const double hr = real.h_re[i], him = real.h_im[i];
    const double denom = hr * hr + him * him + real.sigma2;
    const double d = denom < 1e-24 ? 1e-24 : denom;
    c_re[i] = static_cast<float>(hr / d);
    c_im[i] = static_cast<float>(-him / d);
  }
  return complex_affine(y, c_re, c_im, {}, {});
}

double measure_snr_db(std::span<const float> x, std::span<const float> y,
                      const ChannelRealization& real) {
  if (x.size() != y.size()) throw ShapeError("measure_snr: size mismatch");
  const std::int64_t total = static_cast<std::int64_t>(real.batch) * real.symbols_per_item;
  if (static_cast<std::int64_t>(x.size()) != 2 * total) {
    throw ShapeError("measure_snr: realization mismatch");
  }
  double sig = 0.0, noise = 0.0;
  for (std::int64_t i = 0; i < total; ++i) {
    const std::size_t hi = h_index(real, i);
    const double hr = real.h_re[hi], him = real.h_im[hi];
    const double xr = x[static_cast<std::size_t>(2 * i)], xi = x[static_cast<std::size_t>(2 * i + 1)];
    const double sr = hr * xr - him * xi;
    const double si = hr * xi + him * xr;
    sig += sr * sr + si * si;
    const double nr = y[static_cast<std::size_t>(2 * i)] - sr;
    const double ni = y[static_cast<std::size_t>(2 * i + 1)] - si;
    noise += nr * nr + ni * ni;
  }
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / noise);
}

}  // namespace deepsc
