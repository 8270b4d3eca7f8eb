#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepsc/channel.hpp"
#include "deepsc/tensor.hpp"

namespace deepsc {

// Complex baseband symbols stored as [B, S, 2] real pairs.
struct SymbolBlock {
  Tensor symbols;

  int batch() const { return symbols.dim(0); }
  std::int64_t n_symbols() const { return symbols.dim(1); }
  // Mean complex-symbol power of one batch item.
  double mean_power(int b) const;
};

struct ModelHyper {
  int D = 32;      // semantic feature channels
  int N = 16;      // complex symbols per frame
  int F = 128;     // frames per clip
  int L = 128;     // samples per frame
  int blocks = 4;  // SE-ResNet modules per coder
  int r = 4;       // SE reduction ratio

  bool operator==(const ModelHyper&) const = default;
};

class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(int ksize, int cin, int cout, Rng& rng, bool zero_init = false);
  Tensor forward(const Tensor& x) const { return conv2d(x, kernel, bias); }
  Tensor kernel, bias;
};

class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(int in_features, int out_features, Rng& rng);
  // x: [rows, in] -> [rows, out]
  Tensor forward(const Tensor& x) const;
  Tensor weight, bias;
};

// Residual block with squeeze-and-excitation channel gating:
//   y = conv2(relu(conv1(x)))
//   a = sigmoid(dense2(relu(dense1(gap(y)))))   per-channel gate in (0,1)
//   out = x + y * a
class SEResNetBlock {
 public:
  SEResNetBlock() = default;
  SEResNetBlock(int channels, int reduction, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect_params(const std::string& prefix, std::vector<std::string>& names,
                      std::vector<Tensor>& params);

  Conv2dLayer conv1, conv2;
  DenseLayer se_dense1, se_dense2;
};

struct ForwardDiagnostics {
  Tensor tx_symbols;     // X after power normalization
  Tensor rx_symbols;     // Y out of the channel
  double tx_power = 0.0; // mean complex-symbol power averaged over the batch
};

// The end-to-end transceiver: SE-ResNet speech coder + CNN/dense channel coder
// on each side, with unit-power symbol output.
class DeepSCSModel {
 public:
  explicit DeepSCSModel(const ModelHyper& hyper, std::uint64_t init_seed);

  const ModelHyper& hyper() const { return hyper_; }

  Tensor speech_encode(const Tensor& m) const;         // [B,F,L]   -> [B,F,L,D]
  SymbolBlock channel_encode(const Tensor& b) const;   // [B,F,L,D] -> [B,FN,2]
  Tensor channel_decode(const Tensor& v) const;        // [B,F,2N]  -> [B,F,L,D]
  Tensor speech_decode(const Tensor& b_hat) const;     // [B,F,L,D] -> [B,F,L]

  SymbolBlock encode(const Tensor& m) const;

  // Full differentiable pass through the fading channel. The realization's h
  // and w enter the graph as constants.
  Tensor forward(const Tensor& m, const ChannelRealization& realization,
                 bool equalize_rx = true, ForwardDiagnostics* diag = nullptr) const;

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return param_names_; }
  std::int64_t num_parameters() const;

  // Versioned binary container; round-trips bit-exactly.
  void save(const std::string& path) const;
  static DeepSCSModel load(const std::string& path);

  // FNV-1a over the raw parameter bytes (eval immutability checks).
  std::uint64_t param_hash() const;

 private:
  void register_params();

  ModelHyper hyper_;
  Conv2dLayer lift_;                    // 1 -> D
  std::vector<SEResNetBlock> enc_blocks_;
  Conv2dLayer ch_enc_conv_;             // D -> 8, ReLU
  DenseLayer ch_enc_dense_;             // L*8 -> 2N, linear
  DenseLayer ch_dec_dense_;             // 2N -> L*D, linear
  Conv2dLayer ch_dec_conv_;             // D -> D, ReLU
  std::vector<SEResNetBlock> dec_blocks_;
  Conv2dLayer out_conv_;                // D -> 1, no activation

  std::vector<Tensor> params_;
  std::vector<std::string> param_names_;
};

inline constexpr int kChannelCoderWidth = 8;  // kernels in the channel coder conv

}  // namespace deepsc
