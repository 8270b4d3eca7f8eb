#include "deepsc/model.hpp"

#include <cstring>
#include <fstream>

#include "deepsc/errors.hpp"

namespace deepsc {

double SymbolBlock::mean_power(int b) const {
  const std::int64_t per = 2 * n_symbols();
  auto d = symbols.data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < per; ++i) {
    const double v = d[static_cast<std::size_t>(b * per + i)];
    acc += v * v;
  }
  return acc / static_cast<double>(n_symbols());
}

Conv2dLayer::Conv2dLayer(int ksize, int cin, int cout, Rng& rng, bool zero_init) {
  if (zero_init) {
    kernel = Tensor::zeros({ksize, ksize, cin, cout}, true);
  } else {
    kernel = Tensor::he_normal({ksize, ksize, cin, cout}, ksize * ksize * cin, rng, true);
  }
  bias = Tensor::zeros({cout}, true);
}

DenseLayer::DenseLayer(int in_features, int out_features, Rng& rng) {
  weight = Tensor::he_normal({in_features, out_features}, in_features, rng, true);
  bias = Tensor::zeros({1, out_features}, true);
}

Tensor DenseLayer::forward(const Tensor& x) const { return add(matmul(x, weight), bias); }

SEResNetBlock::SEResNetBlock(int channels, int reduction, Rng& rng) {
  if (channels % reduction != 0) {
    throw ConfigError("SE block: reduction ratio must divide channel count");
  }
  conv1 = Conv2dLayer(3, channels, channels, rng);
  conv2 = Conv2dLayer(3, channels, channels, rng);
  se_dense1 = DenseLayer(channels, channels / reduction, rng);
  se_dense2 = DenseLayer(channels / reduction, channels, rng);
}

Tensor SEResNetBlock::forward(const Tensor& x) const {
  const Tensor y = conv2.forward(relu(conv1.forward(x)));
  const Tensor z = global_avg_pool(y);  // squeeze: [B,C]
  const Tensor a = sigmoid(se_dense2.forward(relu(se_dense1.forward(z))));  // excitation
  const Tensor gate = reshape(a, {x.dim(0), 1, 1, x.dim(3)});
  return add(x, mul_elementwise(y, gate));
}

void SEResNetBlock::collect_params(const std::string& prefix, std::vector<std::string>& names,
                                   std::vector<Tensor>& params) {
  const std::pair<std::string, Tensor> entries[] = {
      {prefix + ".conv1.kernel", conv1.kernel}, {prefix + ".conv1.bias", conv1.bias},
      {prefix + ".conv2.kernel", conv2.kernel}, {prefix + ".conv2.bias", conv2.bias},
      {prefix + ".se1.weight", se_dense1.weight}, {prefix + ".se1.bias", se_dense1.bias},
      {prefix + ".se2.weight", se_dense2.weight}, {prefix + ".se2.bias", se_dense2.bias},
  };
  for (const auto& [n, t] : entries) {
    names.push_back(n);
    params.push_back(t);
  }
}

DeepSCSModel::DeepSCSModel(const ModelHyper& hyper, std::uint64_t init_seed) : hyper_(hyper) {
  if (hyper.D % hyper.r != 0) throw ConfigError("model: r must divide D");
  Rng rng(Rng::derive(init_seed, 0xD5C5ULL));
  lift_ = Conv2dLayer(3, 1, hyper.D, rng);
  for (int i = 0; i < hyper.blocks; ++i) enc_blocks_.emplace_back(hyper.D, hyper.r, rng);
  ch_enc_conv_ = Conv2dLayer(3, hyper.D, kChannelCoderWidth, rng);
  ch_enc_dense_ = DenseLayer(hyper.L * kChannelCoderWidth, 2 * hyper.N, rng);
  ch_dec_dense_ = DenseLayer(2 * hyper.N, hyper.L * hyper.D, rng);
  ch_dec_conv_ = Conv2dLayer(3, hyper.D, hyper.D, rng);
  for (int i = 0; i < hyper.blocks; ++i) dec_blocks_.emplace_back(hyper.D, hyper.r, rng);
  out_conv_ = Conv2dLayer(3, hyper.D, 1, rng);
  register_params();
}

void DeepSCSModel::register_params() {
  params_.clear();
  param_names_.clear();
  auto push = [this](const std::string& n, const Tensor& t) {
    param_names_.push_back(n);
    params_.push_back(t);
  };
  push("speech_encoder.lift.kernel", lift_.kernel);
  push("speech_encoder.lift.bias", lift_.bias);
  for (std::size_t i = 0; i < enc_blocks_.size(); ++i) {
    enc_blocks_[i].collect_params("speech_encoder.block" + std::to_string(i), param_names_,
                                  params_);
  }
  push("channel_encoder.conv.kernel", ch_enc_conv_.kernel);
  push("channel_encoder.conv.bias", ch_enc_conv_.bias);
  push("channel_encoder.dense.weight", ch_enc_dense_.weight);
  push("channel_encoder.dense.bias", ch_enc_dense_.bias);
  push("channel_decoder.dense.weight", ch_dec_dense_.weight);
  push("channel_decoder.dense.bias", ch_dec_dense_.bias);
  push("channel_decoder.conv.kernel", ch_dec_conv_.kernel);
  push("channel_decoder.conv.bias", ch_dec_conv_.bias);
  for (std::size_t i = 0; i < dec_blocks_.size(); ++i) {
    dec_blocks_[i].collect_params("speech_decoder.block" + std::to_string(i), param_names_,
                                  params_);
  }
  push("speech_decoder.out.kernel", out_conv_.kernel);
  push("speech_decoder.out.bias", out_conv_.bias);
}

std::int64_t DeepSCSModel::num_parameters() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

Tensor DeepSCSModel::speech_encode(const Tensor& m) const {
  if (m.rank() != 3 || m.dim(1) != hyper_.F || m.dim(2) != hyper_.L) {
    throw ShapeError("speech_encode: expected [B," + std::to_string(hyper_.F) + "," +
                     std::to_string(hyper_.L) + "], got " + shape_str(m.shape()));
  }
  Tensor x = reshape(m, {m.dim(0), hyper_.F, hyper_.L, 1});
  x = lift_.forward(x);
  for (const auto& blk : enc_blocks_) x = blk.forward(x);
  return x;
}

SymbolBlock DeepSCSModel::channel_encode(const Tensor& b) const {
  const int B = b.dim(0);
  Tensor u = relu(ch_enc_conv_.forward(b));  // [B,F,L,8]
  u = reshape(u, {B * hyper_.F, hyper_.L * kChannelCoderWidth});
  u = ch_enc_dense_.forward(u);              // [B*F, 2N]
  Tensor x = reshape(u, {B, hyper_.F * hyper_.N, 2});
  return SymbolBlock{power_normalize(x)};
}

Tensor DeepSCSModel::channel_decode(const Tensor& v) const {
  if (v.rank() != 3 || v.dim(1) != hyper_.F || v.dim(2) != 2 * hyper_.N) {
    throw ShapeError("channel_decode: expected [B,F,2N], got " + shape_str(v.shape()));
  }
  const int B = v.dim(0);
  Tensor t = reshape(v, {B * hyper_.F, 2 * hyper_.N});
  t = ch_dec_dense_.forward(t);  // [B*F, L*D]
  t = reshape(t, {B, hyper_.F, hyper_.L, hyper_.D});
  return relu(ch_dec_conv_.forward(t));
}

Tensor DeepSCSModel::speech_decode(const Tensor& b_hat) const {
  Tensor x = b_hat;
  for (const auto& blk : dec_blocks_) x = blk.forward(x);
  x = out_conv_.forward(x);  // no activation: samples may be negative
  return reshape(x, {b_hat.dim(0), hyper_.F, hyper_.L});
}

SymbolBlock DeepSCSModel::encode(const Tensor& m) const {
  return channel_encode(speech_encode(m));
}

Tensor DeepSCSModel::forward(const Tensor& m, const ChannelRealization& realization,
                             bool equalize_rx, ForwardDiagnostics* diag) const {
  SymbolBlock x = encode(m);
  Tensor y = transmit(x.symbols, realization);
  Tensor v = equalize_rx ? mmse_combine(y, realization) : y;
  if (diag != nullptr) {
    diag->tx_symbols = x.symbols;
    diag->rx_symbols = y;
    double p = 0.0;
    for (int b = 0; b < x.batch(); ++b) p += x.mean_power(b);
    diag->tx_power = p / x.batch();
  }
  v = reshape(v, {m.dim(0), hyper_.F, 2 * hyper_.N});
  return speech_decode(channel_decode(v));
}

// ---- checkpoint container -------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'S'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ParseError("checkpoint: truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_le(std::ostream& out, const float* data, std::size_t n) {
  static_assert(sizeof(float) == 4);
  // assumes little-endian host float layout, which all supported targets use
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(4 * n));
}

}  // namespace

void DeepSCSModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  for (int v : {hyper_.D, hyper_.N, hyper_.F, hyper_.L, hyper_.blocks, hyper_.r}) {
    write_u32(out, static_cast<std::uint32_t>(v));
  }
  write_u32(out, static_cast<std::uint32_t>(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string& name = param_names_[i];
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& shp = params_[i].shape();
    write_u32(out, static_cast<std::uint32_t>(shp.size()));
    for (int d : shp) write_u32(out, static_cast<std::uint32_t>(d));
    write_f32_le(out, params_[i].data().data(), params_[i].data().size());
  }
  if (!out) throw ParseError("checkpoint: write failed for " + path);
}

DeepSCSModel DeepSCSModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelHyper hyper;
  hyper.D = static_cast<int>(read_u32(in));
  hyper.N = static_cast<int>(read_u32(in));
  hyper.F = static_cast<int>(read_u32(in));
  hyper.L = static_cast<int>(read_u32(in));
  hyper.blocks = static_cast<int>(read_u32(in));
  hyper.r = static_cast<int>(read_u32(in));

  DeepSCSModel model(hyper, 0);
  const std::uint32_t n_params = read_u32(in);
  if (n_params != model.params_.size()) {
    throw CheckpointError("checkpoint: parameter count mismatch in " + path);
  }
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (name != model.param_names_[i]) {
      throw CheckpointError("checkpoint: unexpected parameter '" + name + "'");
    }
    const std::uint32_t rank = read_u32(in);
    Shape shp(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shp[d] = static_cast<int>(read_u32(in));
    if (shp != model.params_[i].shape()) {
      throw CheckpointError("checkpoint: shape mismatch for '" + name + "'");
    }
    auto dst = model.params_[i].data();
    in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(4 * dst.size()));
    if (!in) throw ParseError("checkpoint: truncated parameter data");
  }
  return model;
}

std::uint64_t DeepSCSModel::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.data().data());
    for (std::size_t i = 0; i < 4 * p.data().size(); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace deepsc
