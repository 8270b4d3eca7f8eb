#pragma once

// Independent double-precision re-implementation of the transceiver forward
// pass, used as the finite-difference oracle. Deliberately written as naive
// loops over double vectors, sharing no code with the production engine.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "deepsc/channel.hpp"
#include "deepsc/model.hpp"

namespace refmodel {

using Vec = std::vector<double>;

struct Params {
  std::map<std::string, Vec> by_name;
  std::map<std::string, deepsc::Shape> shapes;

  static Params from(const deepsc::DeepSCSModel& model) {
    Params p;
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      const auto& t = model.params()[i];
      p.by_name[model.param_names()[i]] = Vec(t.data().begin(), t.data().end());
      p.shapes[model.param_names()[i]] = t.shape();
    }
    return p;
  }
};

inline Vec conv2d_ref(const Vec& x, int B, int H, int W, int Cin, const Vec& k, int K, int Cout,
                      const Vec& bias) {
  Vec y(static_cast<std::size_t>(B) * H * W * Cout, 0.0);
  const int pad = K / 2;
  for (int b = 0; b < B; ++b)
    for (int oh = 0; oh < H; ++oh)
      for (int ow = 0; ow < W; ++ow)
        for (int c = 0; c < Cout; ++c) {
          double acc = bias[static_cast<std::size_t>(c)];
          for (int kh = 0; kh < K; ++kh)
            for (int kw = 0; kw < K; ++kw) {
              const int ih = oh + kh - pad, iw = ow + kw - pad;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              for (int ci = 0; ci < Cin; ++ci) {
                acc += x[((static_cast<std::size_t>(b) * H + ih) * W + iw) * Cin + ci] *
                       k[((static_cast<std::size_t>(kh) * K + kw) * Cin + ci) * Cout + c];
              }
            }
          y[((static_cast<std::size_t>(b) * H + oh) * W + ow) * Cout + c] = acc;
        }
  return y;
}

inline Vec dense_ref(const Vec& x, int rows, int in, const Vec& w, int out, const Vec& bias) {
  Vec y(static_cast<std::size_t>(rows) * out, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int o = 0; o < out; ++o) {
      double acc = bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) {
        acc += x[static_cast<std::size_t>(r) * in + i] * w[static_cast<std::size_t>(i) * out + o];
      }
      y[static_cast<std::size_t>(r) * out + o] = acc;
    }
  return y;
}

inline void relu_ref(Vec& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

inline Vec se_block_ref(const Vec& x, int B, int H, int W, int C, int r, const Params& p,
                        const std::string& prefix) {
  Vec y = conv2d_ref(x, B, H, W, C, p.by_name.at(prefix + ".conv1.kernel"), 3, C,
                     p.by_name.at(prefix + ".conv1.bias"));
  relu_ref(y);
  y = conv2d_ref(y, B, H, W, C, p.by_name.at(prefix + ".conv2.kernel"), 3, C,
                 p.by_name.at(prefix + ".conv2.bias"));

  Vec z(static_cast<std::size_t>(B) * C, 0.0);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < H * W; ++i)
      for (int c = 0; c < C; ++c) {
        z[static_cast<std::size_t>(b) * C + c] +=
            y[(static_cast<std::size_t>(b) * H * W + i) * C + c];
      }
  for (double& v : z) v /= static_cast<double>(H) * W;

  Vec a = dense_ref(z, B, C, p.by_name.at(prefix + ".se1.weight"), C / r,
                    p.by_name.at(prefix + ".se1.bias"));
  relu_ref(a);
  a = dense_ref(a, B, C / r, p.by_name.at(prefix + ".se2.weight"), C,
                p.by_name.at(prefix + ".se2.bias"));
  for (double& v : a) v = 1.0 / (1.0 + std::exp(-v));

  Vec out(x.size());
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < H * W; ++i)
      for (int c = 0; c < C; ++c) {
        const std::size_t idx = (static_cast<std::size_t>(b) * H * W + i) * C + c;
        out[idx] = x[idx] + y[idx] * a[static_cast<std::size_t>(b) * C + c];
      }
  return out;
}

// Full pass: frames -> symbols -> channel -> recovered frames -> MSE.
inline double forward_loss_ref(const Params& p, const deepsc::ModelHyper& h, const Vec& m, int B,
                               const deepsc::ChannelRealization& real) {
  const int F = h.F, L = h.L, D = h.D;

  // speech encoder
  Vec b = conv2d_ref(m, B, F, L, 1, p.by_name.at("speech_encoder.lift.kernel"), 3, D,
                     p.by_name.at("speech_encoder.lift.bias"));
  for (int i = 0; i < h.blocks; ++i) {
    b = se_block_ref(b, B, F, L, D, h.r, p, "speech_encoder.block" + std::to_string(i));
  }

  // channel encoder: conv D->8, relu, per-frame dense to 2N, power normalize
  Vec u = conv2d_ref(b, B, F, L, D, p.by_name.at("channel_encoder.conv.kernel"), 3, 8,
                     p.by_name.at("channel_encoder.conv.bias"));
  relu_ref(u);
  u = dense_ref(u, B * F, L * 8, p.by_name.at("channel_encoder.dense.weight"), 2 * h.N,
                p.by_name.at("channel_encoder.dense.bias"));

  const std::int64_t n_sym = static_cast<std::int64_t>(F) * h.N;
  const std::int64_t per = 2 * n_sym;
  for (int bi = 0; bi < B; ++bi) {
    double ss = 0.0;
    for (std::int64_t i = 0; i < per; ++i) ss += u[bi * per + i] * u[bi * per + i];
    const double r = std::sqrt(ss);
    const double s = r < 1e-12 ? 0.0 : std::sqrt(static_cast<double>(n_sym)) / r;
    for (std::int64_t i = 0; i < per; ++i) u[bi * per + i] *= s;
  }

  // channel + MMSE combining (matches the engine's receive path)
  Vec v(u.size());
  for (int bi = 0; bi < B; ++bi) {
    for (std::int64_t s = 0; s < n_sym; ++s) {
      const std::size_t hi = static_cast<std::size_t>(
          real.per_symbol ? bi * n_sym + s : bi);
      const double hr = real.h_re[hi], him = real.h_im[hi];
      const std::size_t wi = static_cast<std::size_t>(bi * n_sym + s);
      const double xr = u[2 * wi], xi = u[2 * wi + 1];
      const double yr = hr * xr - him * xi + real.noise_re[wi];
      const double yi = hr * xi + him * xr + real.noise_im[wi];
      const double denom = std::max(hr * hr + him * him + real.sigma2, 1e-24);
      v[2 * wi] = (yr * hr + yi * him) / denom;
      v[2 * wi + 1] = (yi * hr - yr * him) / denom;
    }
  }

  // channel decoder: per-frame dense 2N -> L*D, reshape, conv D->D, relu
  Vec bh = dense_ref(v, B * F, 2 * h.N, p.by_name.at("channel_decoder.dense.weight"), L * D,
                     p.by_name.at("channel_decoder.dense.bias"));
  bh = conv2d_ref(bh, B, F, L, D, p.by_name.at("channel_decoder.conv.kernel"), 3, D,
                  p.by_name.at("channel_decoder.conv.bias"));
  relu_ref(bh);

  // speech decoder
  for (int i = 0; i < h.blocks; ++i) {
    bh = se_block_ref(bh, B, F, L, D, h.r, p, "speech_decoder.block" + std::to_string(i));
  }
  const Vec mh = conv2d_ref(bh, B, F, L, D, p.by_name.at("speech_decoder.out.kernel"), 3, 1,
                            p.by_name.at("speech_decoder.out.bias"));

  double acc = 0.0;
  for (std::size_t i = 0; i < mh.size(); ++i) {
    const double d = mh[i] - m[i];
    acc += d * d;
  }
  return acc / static_cast<double>(mh.size());
}

}  // namespace refmodel
