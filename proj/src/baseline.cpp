#include "deepsc/baseline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "deepsc/errors.hpp"
#include "deepsc/rng.hpp"

namespace deepsc {

// ---- G.711 A-law ----------------------------------------------------------

namespace alaw {

std::uint8_t encode(float sample) {
  const float c = std::clamp(sample, -1.0f, 1.0f);
  int lin = static_cast<int>(std::lrintf(c * 32768.0f));
  lin = std::clamp(lin, -32768, 32767);
  int ix = lin < 0 ? (~lin) >> 4 : lin >> 4;
  if (ix > 15) {
    int iexp = 1;
    while (ix > 16 + 15) {
      ix >>= 1;
      ++iexp;
    }
    ix -= 16;
    ix += iexp << 4;
  }
  if (lin >= 0) ix |= 0x80;
  return static_cast<std::uint8_t>(ix ^ 0x55);
}

float decode(std::uint8_t code) {
  int ix = (code ^ 0x55) & 0x7F;
  const int iexp = ix >> 4;
  int mant = ix & 0x0F;
  if (iexp > 0) mant += 16;
  mant = (mant << 4) + 8;  // segment midpoint
  if (iexp > 1) mant <<= (iexp - 1);
  return static_cast<float>(code > 127 ? mant : -mant) / 32768.0f;
}

}  // namespace alaw

std::vector<std::uint8_t> pack_bits_msb(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> bits;
  bits.reserve(bytes.size() * 8);
  for (std::uint8_t b : bytes) {
    for (int i = 7; i >= 0; --i) bits.push_back(static_cast<std::uint8_t>((b >> i) & 1));
  }
  return bits;
}

std::vector<std::uint8_t> unpack_bits_msb(std::span<const std::uint8_t> bits) {
  if (bits.size() % 8 != 0) throw ContractError("unpack_bits: bit count not a byte multiple");
  std::vector<std::uint8_t> bytes(bits.size() / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    bytes[i / 8] = static_cast<std::uint8_t>((bytes[i / 8] << 1) | (bits[i] & 1));
  }
  return bytes;
}

// ---- interleaver -----------------------------------------------------------

Interleaver::Interleaver(int n, std::uint64_t seed) {
  perm_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm_[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(perm_);
  inv_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) inv_[static_cast<std::size_t>(perm_[static_cast<std::size_t>(i)])] = i;
}

// ---- RSC(13,15) trellis -----------------------------------------------------

namespace {

// state packs (w_{t-1}, w_{t-2}, w_{t-3}) as bits 2..0
struct Trellis {
  std::array<std::array<int, 2>, 8> next{};
  std::array<std::array<int, 2>, 8> parity{};
  std::array<int, 8> term_input{};  // info bit that drives the register toward 0

  Trellis() {
    for (int s = 0; s < 8; ++s) {
      const int s1 = (s >> 2) & 1, s2 = (s >> 1) & 1, s3 = s & 1;
      for (int u = 0; u < 2; ++u) {
        const int w = u ^ s2 ^ s3;          // feedback 1 + D^2 + D^3
        const int v = w ^ s1 ^ s3;          // feedforward 1 + D + D^3
        next[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)] = (w << 2) | (s1 << 1) | s2;
        parity[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)] = v;
      }
      term_input[static_cast<std::size_t>(s)] = s2 ^ s3;
    }
  }
};

const Trellis& trellis() {
  static const Trellis t;
  return t;
}

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kSovaWindow = 32;

// One SOVA pass over a constituent trellis. sys/par have K entries plus
// kMemory tail entries when `terminated`. Fills soft[k] = sign * reliability
// (log P0/P1 scale) for the K info bits.
void sova_component(std::span<const double> sys, std::span<const double> par,
                    std::span<const double> apriori, bool terminated,
                    std::span<double> soft) {
  const auto& tr = trellis();
  const int K = static_cast<int>(apriori.size());
  const int T = terminated ? K + TurboCodec::kMemory : K;

  struct Step {
    std::array<double, 8> metric;
    std::array<std::int8_t, 8> surv_prev, surv_u, lose_prev, lose_u;
    std::array<double, 8> delta;
  };
  std::vector<Step> steps(static_cast<std::size_t>(T) + 1);
  for (auto& st : steps) {
    st.metric.fill(kNegInf);
    st.delta.fill(kInf);
    st.surv_prev.fill(-1);
    st.lose_prev.fill(-1);
  }
  steps[0].metric[0] = 0.0;

  for (int t = 0; t < T; ++t) {
    const Step& cur = steps[static_cast<std::size_t>(t)];
    Step& nxt = steps[static_cast<std::size_t>(t) + 1];
    const double ls = t < K ? sys[static_cast<std::size_t>(t)] + apriori[static_cast<std::size_t>(t)]
                            : sys[static_cast<std::size_t>(t)];
    const double lp = par[static_cast<std::size_t>(t)];
    for (int s = 0; s < 8; ++s) {
      if (cur.metric[static_cast<std::size_t>(s)] == kNegInf) continue;
      const int u_lo = t < K ? 0 : tr.term_input[static_cast<std::size_t>(s)];
      const int u_hi = t < K ? 1 : tr.term_input[static_cast<std::size_t>(s)];
      for (int u = u_lo; u <= u_hi; ++u) {
        const int v = tr.parity[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)];
        const int ns = tr.next[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)];
        const double m = cur.metric[static_cast<std::size_t>(s)] +
                         0.5 * (ls * (1 - 2 * u) + lp * (1 - 2 * v));
        auto& nm = nxt.metric[static_cast<std::size_t>(ns)];
        if (m > nm) {
          if (nxt.surv_prev[static_cast<std::size_t>(ns)] >= 0) {
            nxt.lose_prev[static_cast<std::size_t>(ns)] = nxt.surv_prev[static_cast<std::size_t>(ns)];
            nxt.lose_u[static_cast<std::size_t>(ns)] = nxt.surv_u[static_cast<std::size_t>(ns)];
            nxt.delta[static_cast<std::size_t>(ns)] = m - nm;
          }
          nm = m;
          nxt.surv_prev[static_cast<std::size_t>(ns)] = static_cast<std::int8_t>(s);
          nxt.surv_u[static_cast<std::size_t>(ns)] = static_cast<std::int8_t>(u);
        } else if (nxt.surv_prev[static_cast<std::size_t>(ns)] >= 0 &&
                   nm - m < nxt.delta[static_cast<std::size_t>(ns)]) {
          nxt.lose_prev[static_cast<std::size_t>(ns)] = static_cast<std::int8_t>(s);
          nxt.lose_u[static_cast<std::size_t>(ns)] = static_cast<std::int8_t>(u);
          nxt.delta[static_cast<std::size_t>(ns)] = nm - m;
        }
      }
    }
  }

  // end state: forced zero when terminated, best metric otherwise
  int end_state = 0;
  if (!terminated) {
    double best = kNegInf;
    for (int s = 0; s < 8; ++s) {
      if (steps[static_cast<std::size_t>(T)].metric[static_cast<std::size_t>(s)] > best) {
        best = steps[static_cast<std::size_t>(T)].metric[static_cast<std::size_t>(s)];
        end_state = s;
      }
    }
  }

  std::vector<std::int8_t> path_state(static_cast<std::size_t>(T) + 1);
  std::vector<std::int8_t> path_u(static_cast<std::size_t>(T));
  path_state[static_cast<std::size_t>(T)] = static_cast<std::int8_t>(end_state);
  for (int t = T; t > 0; --t) {
    const int s = path_state[static_cast<std::size_t>(t)];
    path_u[static_cast<std::size_t>(t) - 1] = steps[static_cast<std::size_t>(t)].surv_u[static_cast<std::size_t>(s)];
    path_state[static_cast<std::size_t>(t) - 1] =
        steps[static_cast<std::size_t>(t)].surv_prev[static_cast<std::size_t>(s)];
  }

  std::vector<double> rel(static_cast<std::size_t>(K), kInf);
  for (int j = 1; j <= T; ++j) {
    const int sj = path_state[static_cast<std::size_t>(j)];
    const double d = steps[static_cast<std::size_t>(j)].delta[static_cast<std::size_t>(sj)];
    if (d == kInf) continue;
    // competing branch into the maximum-likelihood path at time j
    int cs = steps[static_cast<std::size_t>(j)].lose_prev[static_cast<std::size_t>(sj)];
    int cu = steps[static_cast<std::size_t>(j)].lose_u[static_cast<std::size_t>(sj)];
    int t = j - 1;
    if (t < K && cu != path_u[static_cast<std::size_t>(t)] && d < rel[static_cast<std::size_t>(t)]) {
      rel[static_cast<std::size_t>(t)] = d;
    }
    for (int depth = 1; depth < kSovaWindow; ++depth) {
      t = j - 1 - depth;
      if (t < 0) break;
      cu = steps[static_cast<std::size_t>(t) + 1].surv_u[static_cast<std::size_t>(cs)];
      const int ps = steps[static_cast<std::size_t>(t) + 1].surv_prev[static_cast<std::size_t>(cs)];
      if (cu != path_u[static_cast<std::size_t>(t)] && t < K && d < rel[static_cast<std::size_t>(t)]) {
        rel[static_cast<std::size_t>(t)] = d;
      }
      cs = ps;
      if (cs < 0) break;
    }
  }

  constexpr double kRelCap = 1e12;
  for (int t = 0; t < K; ++t) {
    const double r = std::min(rel[static_cast<std::size_t>(t)], kRelCap);
    soft[static_cast<std::size_t>(t)] = (1 - 2 * path_u[static_cast<std::size_t>(t)]) * r;
  }
}

}  // namespace

TurboCodec::TurboCodec(int block_length, int iterations)
    : k_(block_length), iterations_(iterations),
      interleaver_(block_length, kInterleaverSeed) {
  if (block_length < 1) throw ContractError("turbo: block_length must be positive");
  if (iterations < 1) throw ContractError("turbo: iterations must be positive");
}

std::vector<std::uint8_t> TurboCodec::encode(std::span<const std::uint8_t> bits) const {
  if (static_cast<int>(bits.size()) != k_) {
    throw ContractError("turbo_encode: expected exactly " + std::to_string(k_) + " bits, got " +
                        std::to_string(bits.size()));
  }
  const auto& tr = trellis();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(coded_length()), 0);

  // encoder 1: systematic + parity1, then trellis termination
  int state = 0;
  for (int t = 0; t < k_; ++t) {
    const int u = bits[static_cast<std::size_t>(t)] & 1;
    out[static_cast<std::size_t>(t)] = static_cast<std::uint8_t>(u);
    out[static_cast<std::size_t>(k_ + t)] =
        static_cast<std::uint8_t>(tr.parity[static_cast<std::size_t>(state)][static_cast<std::size_t>(u)]);
    state = tr.next[static_cast<std::size_t>(state)][static_cast<std::size_t>(u)];
  }
  int tail_state = state;
  for (int i = 0; i < kMemory; ++i) {
    const int u = tr.term_input[static_cast<std::size_t>(tail_state)];
    out[static_cast<std::size_t>(3 * k_ + 2 * i)] = static_cast<std::uint8_t>(u);
    out[static_cast<std::size_t>(3 * k_ + 2 * i + 1)] = static_cast<std::uint8_t>(
        tr.parity[static_cast<std::size_t>(tail_state)][static_cast<std::size_t>(u)]);
    tail_state = tr.next[static_cast<std::size_t>(tail_state)][static_cast<std::size_t>(u)];
  }

  // encoder 2 on interleaved bits, left unterminated
  state = 0;
  for (int t = 0; t < k_; ++t) {
    const int u = bits[static_cast<std::size_t>(interleaver_.map(t))] & 1;
    out[static_cast<std::size_t>(2 * k_ + t)] =
        static_cast<std::uint8_t>(tr.parity[static_cast<std::size_t>(state)][static_cast<std::size_t>(u)]);
    state = tr.next[static_cast<std::size_t>(state)][static_cast<std::size_t>(u)];
  }
  return out;
}

std::vector<std::uint8_t> TurboCodec::decode_sova(std::span<const double> llrs) const {
  return decode_sova(llrs, iterations_);
}

std::vector<std::uint8_t> TurboCodec::decode_sova(std::span<const double> llrs,
                                                  int iterations) const {
  if (static_cast<int>(llrs.size()) != coded_length()) {
    throw ContractError("sova_decode: expected " + std::to_string(coded_length()) +
                        " LLRs, got " + std::to_string(llrs.size()));
  }
  const int K = k_;
  std::vector<double> sys1(static_cast<std::size_t>(K + kMemory));
  std::vector<double> par1(static_cast<std::size_t>(K + kMemory));
  for (int t = 0; t < K; ++t) {
    sys1[static_cast<std::size_t>(t)] = llrs[static_cast<std::size_t>(t)];
    par1[static_cast<std::size_t>(t)] = llrs[static_cast<std::size_t>(K + t)];
  }
  for (int i = 0; i < kMemory; ++i) {
    sys1[static_cast<std::size_t>(K + i)] = llrs[static_cast<std::size_t>(3 * K + 2 * i)];
    par1[static_cast<std::size_t>(K + i)] = llrs[static_cast<std::size_t>(3 * K + 2 * i + 1)];
  }
  std::vector<double> sys2(static_cast<std::size_t>(K));
  std::vector<double> par2(static_cast<std::size_t>(K));
  for (int t = 0; t < K; ++t) {
    sys2[static_cast<std::size_t>(t)] = llrs[static_cast<std::size_t>(interleaver_.map(t))];
    par2[static_cast<std::size_t>(t)] = llrs[static_cast<std::size_t>(2 * K + t)];
  }

  std::vector<double> apriori1(static_cast<std::size_t>(K), 0.0);
  std::vector<double> apriori2(static_cast<std::size_t>(K), 0.0);
  std::vector<double> soft1(static_cast<std::size_t>(K));
  std::vector<double> soft2(static_cast<std::size_t>(K));

  for (int it = 0; it < iterations; ++it) {
    sova_component({sys1.data(), sys1.size()}, {par1.data(), par1.size()},
                   {apriori1.data(), apriori1.size()}, true, {soft1.data(), soft1.size()});
    // extrinsic from decoder 1, handed over in interleaved bit order
    for (int i = 0; i < K; ++i) {
      const int src = interleaver_.map(i);
      apriori2[static_cast<std::size_t>(i)] =
          kExtrinsicScale * (soft1[static_cast<std::size_t>(src)] -
                             apriori1[static_cast<std::size_t>(src)] -
                             sys1[static_cast<std::size_t>(src)]);
    }
    sova_component({sys2.data(), sys2.size()}, {par2.data(), par2.size()},
                   {apriori2.data(), apriori2.size()}, false, {soft2.data(), soft2.size()});
    for (int i = 0; i < K; ++i) {
      apriori1[static_cast<std::size_t>(interleaver_.map(i))] =
          kExtrinsicScale * (soft2[static_cast<std::size_t>(i)] -
                             apriori2[static_cast<std::size_t>(i)] -
                             sys2[static_cast<std::size_t>(i)]);
    }
  }

  std::vector<std::uint8_t> bits(static_cast<std::size_t>(K), 0);
  for (int i = 0; i < K; ++i) {
    bits[static_cast<std::size_t>(interleaver_.map(i))] =
        soft2[static_cast<std::size_t>(i)] < 0.0 ? 1 : 0;
  }
  return bits;
}

// ---- 64-QAM -----------------------------------------------------------------

namespace {

inline int gray_encode(int i) { return i ^ (i >> 1); }
inline int gray_decode(int g) { return g ^ (g >> 1) ^ (g >> 2); }

// 3 bits (MSB first) -> amplitude in {-7,-5,...,+7}
inline int bits_to_amp(int b0, int b1, int b2) {
  const int label = (b0 << 2) | (b1 << 1) | b2;
  return 2 * gray_decode(label) - 7;
}

inline int amp_to_label(int amp) { return gray_encode((amp + 7) / 2); }

}  // namespace

Qam64::Modulated Qam64::modulate(std::span<const std::uint8_t> bits) {
  Modulated result;
  std::size_t n = bits.size();
  result.pad_bits = static_cast<int>((kBitsPerSymbol - n % kBitsPerSymbol) % kBitsPerSymbol);
  const std::size_t n_sym = (n + static_cast<std::size_t>(result.pad_bits)) / kBitsPerSymbol;
  result.iq.resize(2 * n_sym);
  auto bit = [&bits, n](std::size_t i) -> int { return i < n ? (bits[i] & 1) : 0; };
  for (std::size_t s = 0; s < n_sym; ++s) {
    const std::size_t o = s * kBitsPerSymbol;
    const int ai = bits_to_amp(bit(o), bit(o + 1), bit(o + 2));
    const int aq = bits_to_amp(bit(o + 3), bit(o + 4), bit(o + 5));
    result.iq[2 * s] = static_cast<float>(ai * kScale);
    result.iq[2 * s + 1] = static_cast<float>(aq * kScale);
  }
  return result;
}

std::vector<std::uint8_t> Qam64::demodulate_hard(std::span<const float> iq) {
  if (iq.size() % 2 != 0) throw ContractError("qam64: odd iq length");
  std::vector<std::uint8_t> bits;
  bits.reserve(iq.size() / 2 * kBitsPerSymbol);
  for (std::size_t s = 0; s < iq.size() / 2; ++s) {
    for (const double u : {static_cast<double>(iq[2 * s]), static_cast<double>(iq[2 * s + 1])}) {
      int idx = static_cast<int>(std::lround((u / kScale + 7.0) / 2.0));
      idx = std::clamp(idx, 0, 7);
      const int label = gray_encode(idx);
      bits.push_back(static_cast<std::uint8_t>((label >> 2) & 1));
      bits.push_back(static_cast<std::uint8_t>((label >> 1) & 1));
      bits.push_back(static_cast<std::uint8_t>(label & 1));
    }
  }
  // reorder: we emitted I bits then Q bits per symbol already in stream order
  return bits;
}

std::vector<double> Qam64::demodulate_soft(std::span<const float> iq,
                                           const ChannelRealization& realization) {
  const std::int64_t total = static_cast<std::int64_t>(realization.batch) * realization.symbols_per_item;
  if (static_cast<std::int64_t>(iq.size()) != 2 * total) {
    throw ShapeError("qam64 demod: symbol count mismatch with realization");
  }
  std::vector<double> llrs(static_cast<std::size_t>(total) * kBitsPerSymbol);
  for (std::int64_t s = 0; s < total; ++s) {
    const std::size_t hi = static_cast<std::size_t>(
        realization.per_symbol ? s : s / realization.symbols_per_item);
    const double hr = realization.h_re[hi], him = realization.h_im[hi];
    double mag2 = hr * hr + him * him;
    if (mag2 < 1e-24) mag2 = 1e-24;
    const double yr = iq[static_cast<std::size_t>(2 * s)], yi = iq[static_cast<std::size_t>(2 * s + 1)];
    const double ur = (yr * hr + yi * him) / mag2;
    const double ui = (yi * hr - yr * him) / mag2;
    double sigma_eff2 = realization.sigma2 / mag2;
    if (sigma_eff2 < 1e-12) sigma_eff2 = 1e-12;

    for (int axis = 0; axis < 2; ++axis) {
      const double u = axis == 0 ? ur : ui;
      double best0[3], best1[3];
      for (int b = 0; b < 3; ++b) {
        best0[b] = kInf;
        best1[b] = kInf;
      }
      for (int idx = 0; idx < 8; ++idx) {
        const int amp = 2 * idx - 7;
        const double d = (u - amp * kScale) * (u - amp * kScale);
        const int label = gray_encode(idx);
        for (int b = 0; b < 3; ++b) {
          const int bit = (label >> (2 - b)) & 1;
          if (bit == 0) {
            if (d < best0[b]) best0[b] = d;
          } else {
            if (d < best1[b]) best1[b] = d;
          }
        }
      }
      for (int b = 0; b < 3; ++b) {
        llrs[static_cast<std::size_t>(s) * kBitsPerSymbol + static_cast<std::size_t>(3 * axis + b)] =
            (best1[b] - best0[b]) / sigma_eff2;
      }
    }
  }
  return llrs;
}

// ---- end-to-end chain --------------------------------------------------------

BaselineResult baseline_transmit(const SpeechClip& clip, const ChannelSpec& spec,
                                 std::uint64_t stream_seed) {
  static const TurboCodec codec;  // block 512, 5 iterations
  const int K = codec.block_length();

  std::vector<std::uint8_t> codes(clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) codes[i] = alaw::encode(clip.samples[i]);

  const std::vector<std::uint8_t> info_bits = pack_bits_msb(codes);
  const std::size_t n_blocks = (info_bits.size() + static_cast<std::size_t>(K) - 1) /
                               static_cast<std::size_t>(K);

  std::vector<std::uint8_t> coded;
  coded.reserve(n_blocks * static_cast<std::size_t>(codec.coded_length()));
  std::vector<std::uint8_t> block(static_cast<std::size_t>(K), 0);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    std::fill(block.begin(), block.end(), 0);
    const std::size_t off = b * static_cast<std::size_t>(K);
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(K), info_bits.size() - off);
    std::copy_n(info_bits.begin() + static_cast<std::ptrdiff_t>(off), n, block.begin());
    const auto enc = codec.encode(block);
    coded.insert(coded.end(), enc.begin(), enc.end());
  }

  const auto mod = Qam64::modulate(coded);
  const std::int64_t n_sym = static_cast<std::int64_t>(mod.iq.size() / 2);

  Rng rng(stream_seed);
  const ChannelRealization real = sample_channel(spec, 1, n_sym, rng);
  std::vector<float> y(mod.iq.size());
  apply_channel(real, mod.iq, y);

  std::int64_t flagged = 0;
  for (std::size_t i = 0; i < real.h_re.size(); ++i) {
    const double m2 = static_cast<double>(real.h_re[i]) * real.h_re[i] +
                      static_cast<double>(real.h_im[i]) * real.h_im[i];
    if (m2 < 1e-24) flagged += real.per_symbol ? 1 : real.symbols_per_item;
  }

  const std::vector<double> llrs = Qam64::demodulate_soft(y, real);

  std::vector<std::uint8_t> decoded_bits;
  decoded_bits.reserve(n_blocks * static_cast<std::size_t>(K));
  const int coded_len = codec.coded_length();
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::size_t off = b * static_cast<std::size_t>(coded_len);
    const auto dec = codec.decode_sova({llrs.data() + off, static_cast<std::size_t>(coded_len)});
    decoded_bits.insert(decoded_bits.end(), dec.begin(), dec.end());
  }
  decoded_bits.resize(info_bits.size());

  const std::vector<std::uint8_t> rec_codes = unpack_bits_msb(decoded_bits);
  BaselineResult result;
  result.recovered.sample_rate_hz = clip.sample_rate_hz;
  result.recovered.source_id = clip.source_id;
  result.recovered.samples.resize(clip.samples.size());
  for (std::size_t i = 0; i < rec_codes.size(); ++i) {
    result.recovered.samples[i] = alaw::decode(rec_codes[i]);
  }
  result.n_symbols = n_sym;
  result.flagged_symbols = flagged;
  return result;
}

void dump_bit_blocks(const std::string& path, std::span<const std::uint8_t> bits, int block_len) {
  std::ofstream out(path);
  if (!out) throw ParseError("dump: cannot write " + path);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    out << static_cast<char>('0' + (bits[i] & 1));
    if ((i + 1) % static_cast<std::size_t>(block_len) == 0) out << '\n';
  }
  if (bits.size() % static_cast<std::size_t>(block_len) != 0) out << '\n';
}

}  // namespace deepsc
