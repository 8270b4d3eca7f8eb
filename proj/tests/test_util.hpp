#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "deepsc/rng.hpp"
#include "deepsc/tensor.hpp"

namespace deepsc::testutil {

// Unique scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
};

inline double rel_err(double analytic, double numeric, double floor = 1e-2) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

// Central finite differences against the analytic gradient for every entry of
// `param`. `loss_fn` must rebuild the forward pass from current values. The
// default eps balances float32 rounding noise (~1/eps) against truncation;
// most probed losses are quadratic in the parameter, where central
// differences carry no truncation error at all.
inline double max_grad_rel_err(Tensor& param, const std::function<Tensor()>& loss_fn,
                               double eps = 5e-3, double floor = 1e-2) {
  param.zero_grad();  // grads accumulate; discard anything from earlier passes
  GradTape tape;
  {
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<float> analytic(param.grad().begin(), param.grad().end());
  param.zero_grad();

  double worst = 0.0;
  auto data = param.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float keep = data[i];
    data[i] = keep + static_cast<float>(eps);
    const double lp = loss_fn().item();
    data[i] = keep - static_cast<float>(eps);
    const double lm = loss_fn().item();
    data[i] = keep;
    const double fd = (lp - lm) / (2.0 * eps);
    worst = std::max(worst, rel_err(analytic[i], fd, floor));
  }
  return worst;
}

// Plain six-loop NHWC convolution, the independent oracle for conv2d.
inline std::vector<float> conv2d_reference(const std::vector<float>& x,
                                           const std::vector<float>& k,
                                           const std::vector<float>& bias, int B, int H, int W,
                                           int Cin, int Kh, int Kw, int Cout) {
  std::vector<float> y(static_cast<std::size_t>(B) * H * W * Cout, 0.0f);
  const int ph = Kh / 2, pw = Kw / 2;
  for (int b = 0; b < B; ++b)
    for (int oh = 0; oh < H; ++oh)
      for (int ow = 0; ow < W; ++ow)
        for (int c = 0; c < Cout; ++c) {
          double acc = bias[static_cast<std::size_t>(c)];
          for (int kh = 0; kh < Kh; ++kh)
            for (int kw = 0; kw < Kw; ++kw)
              for (int ci = 0; ci < Cin; ++ci) {
                const int ih = oh + kh - ph, iw = ow + kw - pw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += static_cast<double>(
                           x[((static_cast<std::size_t>(b) * H + ih) * W + iw) * Cin + ci]) *
                       k[((static_cast<std::size_t>(kh) * Kw + kw) * Cin + ci) * Cout + c];
              }
          y[((static_cast<std::size_t>(b) * H + oh) * W + ow) * Cout + c] =
              static_cast<float>(acc);
        }
  return y;
}

}  // namespace deepsc::testutil
